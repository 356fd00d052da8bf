use lelong_core::currents::{dilate, ddc_of, Current, PshData};
use lelong_core::forms::{dy, dybar, Form, Polynomial};
use lelong_core::geometry::{BaseDomain, LocalSetting};
use lelong_core::integrate::{QuadratureSpec, TensorBudget};
use lelong_core::lelong::*;
use lelong_core::maps::{loglog_slope, AdmissibleMap};
use lelong_core::{LabError, C64};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn fast() -> QuadratureSpec {
    QuadratureSpec::tensor(TensorBudget { panels: 6, radial: 6, angular: 0, base: 8 })
}

fn ctx(k: usize, l: usize, p: usize) -> IndicatorContext {
    IndicatorContext::new(LocalSetting::standard(k, l, p), BaseDomain::unit_disc(), fast())
}

fn seq(f: impl Fn(f64) -> f64, err: f64) -> Vec<Sample> {
    (0..6).map(|n| 0.5f64.powi(n)).map(|r| Sample { r, value: f(r), error: err }).collect()
}

#[test]
fn extrapolation_paths() {
    let x = extrapolate(&seq(|_| 3.25, 1e-9)).unwrap();
    assert_eq!(x.limit, 3.25);
    assert_eq!(x.error, 1e-9);
    assert!(x.monotone);

    let x = extrapolate(&seq(|r| 1.5 + 0.7 * r, 1e-10)).unwrap();
    assert_eq!(x.method, ExtrapolationMethod::Richardson);
    assert!((x.limit - 1.5).abs() <= 2.0 * x.error.max(1e-12), "{x:?}");

    let x = extrapolate(&seq(|r| 2.0 - 0.3 * r * r, 1e-10)).unwrap();
    assert!((x.limit - 2.0).abs() <= 2.0 * x.error, "{x:?}");

    let osc: Vec<Sample> = (0..6).map(|n| Sample { r: 0.5f64.powi(n), value: if n % 2 == 0 { 1.0 } else { -1.0 }, error: 1e-6 }).collect();
    let x = extrapolate(&osc).unwrap();
    assert_eq!(x.method, ExtrapolationMethod::LastValue);
    assert_eq!(x.limit, -1.0);
    assert!(x.error >= 2.0);
    assert!(!x.monotone);

    assert!(matches!(extrapolate(&osc[..3]), Err(LabError::InsufficientSamples { needed: 4, got: 3 })));
    assert!(RadiusSchedule::new(0.5, 3).is_err());
    assert_eq!(RadiusSchedule::new(0.5, 4).unwrap().radii(), vec![0.5, 0.25, 0.125, 0.0625]);
}

#[test]
fn point_lelong_of_planes() {
    let q = fast();
    let origin2 = vec![c(0.0); 2];
    let origin3 = vec![c(0.0); 3];
    let line = Current::integration_linear(2, 1, &[vec![C64::new(0.6, 0.2), c(-0.4)]]).unwrap();
    let plane = Current::integration_linear(3, 1, &[vec![c(1.0), c(0.0), c(1.0)], vec![c(0.0), C64::new(0.0, 1.0), c(0.3)]]).unwrap();
    for r in [0.1, 0.2, 0.4] {
        let a = nu_point(&line, &origin2, r, &q).unwrap();
        let b = nu_point(&plane, &origin3, r, &q).unwrap();
        assert!((a.value.re - 1.0).abs() < 1e-10, "{}", a.value);
        assert!((b.value.re - 1.0).abs() < 1e-10, "{}", b.value);
    }
}

#[test]
fn point_lelong_of_alpha_and_smooth() {
    // α∧ω₀ on C²: α∧β has mass 4r² and ω₀ = (π/2)β
    let q = fast();
    let o = vec![c(0.0); 2];
    let a = Current::alpha_power(2, 0, 1).unwrap();
    let est = nu_point_schedule(&a, &o, &RadiusSchedule::new(0.4, 4).unwrap(), &q).unwrap();
    for s in &est.samples {
        assert!((s.value - 2.0).abs() < 1e-8, "{s:?}");
    }
    assert!((est.limit - 2.0).abs() < 1e-8);

    let s = LocalSetting::standard(2, 1, 1);
    let smooth = Current::smooth(1, s.beta().add(&s.omega()).unwrap()).unwrap();
    let radii = [0.4, 0.2, 0.1, 0.05];
    let vals: Vec<f64> = radii.iter().map(|r| nu_point(&smooth, &o, *r, &q).unwrap().value.re).collect();
    assert!(loglog_slope(&radii, &vals) >= 1.9, "{vals:?}");
}

#[test]
fn worked_example_alpha_power() {
    // k=3, l=1, p=1: ν_1 = 2^2 ∫_D ω = 8, ν_0 = 0, ν_2 = 0
    let cx = ctx(3, 1, 1);
    let t = Current::alpha_power(3, 1, 1).unwrap();
    let sched = RadiusSchedule::new(0.5, 5).unwrap();
    let nu1 = nu_j_schedule(&cx, &t, 1, &sched).unwrap();
    assert!((nu1.limit - 8.0).abs() <= 0.02 * 8.0, "{nu1:?}");
    assert!((nu1.limit - 8.0).abs() <= 1e-6, "{nu1:?}");
    for j in [0, 2, -1] {
        let e = nu_j_schedule(&cx, &t, j, &sched).unwrap();
        assert!(e.limit.abs() <= e.error + 1e-12, "j={j}: {e:?}");
    }
}

#[test]
fn intermediate_means_reuse_samples() {
    let cx = ctx(3, 1, 1);
    let t = Current::alpha_power(3, 1, 1).unwrap();
    let radii = [0.5, 0.3];
    for j in [0i64, 1] {
        let n = (3 - 1 - j) as usize;
        let a = nu_jq_radii(&cx, &t, j, n, &radii).unwrap();
        let b: Vec<_> = radii.iter().map(|r| nu_j(&cx, &t, j, *r).unwrap()).collect();
        // batched radii share inner panels, so agreement is to rounding and resolution
        for (x, y) in a.iter().zip(&b) {
            assert!((x.value - y.value).norm() <= x.error + y.error + 1e-12, "{} vs {}", x.value, y.value);
        }
        let raw = nu_jq_radii(&cx, &t, j, 0, &radii).unwrap();
        for ((x, y), r) in raw.iter().zip(&b).zip(radii) {
            assert!((x.value - y.value * r.powi(2 * n as i32)).norm() <= x.error + y.error * r.powi(2 * n as i32) + 1e-12);
            assert!(x.value.re >= -x.error);
        }
    }
}

fn random_positive_form(k: usize, seed: u64) -> Form {
    // Σ_i (1 + |P_i|²) (i/π) dy_i∧dȳ_i with small random polynomials P_i
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let comps = (0..k)
        .map(|i| {
            let mut p = Polynomial::zero(k);
            for v in 0..k {
                let a = C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                p = p.add(&Polynomial::var(k, v).scale(a));
            }
            let coef = Polynomial::constant(k, c(1.0)).add(&p.mul(&p.conj()));
            (dy(i) | dybar(i), coef.scale(C64::new(0.0, 1.0 / std::f64::consts::PI)))
        })
        .collect();
    Form::polynomial(k, comps).unwrap()
}

#[test]
fn smooth_currents_have_no_transverse_mass() {
    for (k, l) in [(3, 1), (3, 2)] {
        let p = 1;
        let cx = ctx(k, l, p);
        let cx = IndicatorContext { base: BaseDomain::Ball { center: vec![c(0.0); l], radius: 1.0 }, ..cx };
        let t = Current::smooth(l, random_positive_form(k, 7 + k as u64)).unwrap();
        let sched = RadiusSchedule::new(0.4, 5).unwrap();
        let (lo, hi) = (cx.setting.m_low() as i64, cx.setting.m_high() as i64);
        for j in lo..=hi {
            let e = nu_j_schedule(&cx, &t, j, &sched).unwrap();
            if j == l as i64 - p as i64 {
                assert!(e.limit >= -e.error, "{e:?}");
                assert!(e.limit > 0.1);
            } else {
                assert!(e.limit.abs() <= e.error, "k={k} l={l} j={j}: {e:?}");
            }
        }
    }
}

fn norm2_alpha(k: usize, l: usize) -> Current {
    let f = (0..k - l).map(|i| Polynomial::var(k, i)).collect();
    Current::psh_log_norm(k, l, PshData { f, e: 1, a: 0, b: 1, singular_weight: 0.0 }).unwrap()
}

#[test]
fn scaling_identity() {
    let cx = ctx(3, 1, 1);
    let r = 0.4;
    for t in [norm2_alpha(3, 1), Current::smooth(1, random_positive_form(3, 3)).unwrap()] {
        for lam in [2.0, 5.0] {
            let d = dilate(c(lam), &t).unwrap();
            for j in [0i64, 1] {
                let a = nu_j(&cx, &t, j, r / lam).unwrap();
                let b = nu_j(&cx, &d, j, r).unwrap();
                assert!(
                    (a.value - b.value).norm() <= 1e-12 * a.value.norm().max(1e-300),
                    "λ={lam} j={j}: {} vs {}",
                    a.value,
                    b.value
                );
                // an independent resolution agrees within error bars
                let other = IndicatorContext { quad: QuadratureSpec::tensor(TensorBudget { panels: 7, radial: 7, angular: 6, base: 10 }), ..cx.clone() };
                let e = nu_j(&other, &d, j, r).unwrap();
                assert!((e.value - b.value).norm() <= 3.0 * (e.error + b.error) + 1e-12, "{} vs {}", e.value, b.value);
            }
        }
    }
}

#[test]
fn top_indicator_monotone_for_closed_currents() {
    let cx = ctx(3, 1, 1);
    let sched = RadiusSchedule::new(0.8, 6).unwrap();
    let top = top_index(&cx.setting);
    assert_eq!(top, 1);
    let tilted = Current::integration_linear(3, 1, &[vec![c(1.0), c(0.0), c(1.0)], vec![c(0.0), c(1.0), c(0.0)]]).unwrap();
    for t in [Current::alpha_power(3, 1, 1).unwrap(), tilted.clone()] {
        let e = nu_j_schedule(&cx, &t, top, &sched).unwrap();
        assert!(e.nondecreasing_in_r(), "{e:?}");
        assert!(e.samples.iter().all(|s| s.value >= -s.error));
        // κ_top(s, r) = ν_top(r) − ν_top(s)
        for (s, r) in [(0.2, 0.6), (0.05, 0.4)] {
            let k = kappa_corona(&cx, &t, top, s, r).unwrap();
            let hi = nu_j(&cx, &t, top, r).unwrap();
            let lo = nu_j(&cx, &t, top, s).unwrap();
            let diff = hi.value.re - lo.value.re;
            assert!((k.value.re - diff).abs() <= 3.0 * (k.error + hi.error + lo.error) + 1e-9, "{} vs {diff}", k.value);
        }
        let k = kappa_corona(&cx, &t, top, 0.3, 0.3).unwrap();
        assert!(k.value.norm() <= k.error + 1e-14);
    }
    // the tilted plane: ν_1(r) = 2r², ν_0 = 4
    let e = nu_j(&cx, &tilted, 1, 0.5).unwrap();
    assert!((e.value.re - 0.5).abs() < 1e-12, "{}", e.value);
    let e = nu_j(&cx, &tilted, 0, 0.5).unwrap();
    assert!((e.value.re - 4.0).abs() < 1e-12, "{}", e.value);
}

#[test]
fn corona_bound_for_smooth_currents() {
    let cx = ctx(3, 1, 1);
    let t = Current::smooth(1, random_positive_form(3, 11)).unwrap();
    let radii = [0.4, 0.2, 0.1, 0.05];
    let vals: Vec<f64> = radii.iter().map(|r| kappa_corona(&cx, &t, 1, r / 2.0, *r).unwrap().value.norm()).collect();
    assert!(loglog_slope(&radii, &vals) >= 0.9, "{vals:?}");
    assert!(matches!(kappa_corona(&cx, &t, 1, 0.0, 0.3), Err(LabError::Precondition(_))));
}

#[test]
fn eps_indicator_for_alpha() {
    // ∫ α∧α_ε∧ω over Tube(D, r) = 8r²/(r²+ε²)
    let cx = ctx(3, 1, 1);
    let t = Current::alpha_power(3, 1, 1).unwrap();
    let r = 0.4;
    let eps: Vec<f64> = [2.0, 4.0, 8.0, 16.0].iter().map(|d| r / d).collect();
    let seq = kappa_eps(&cx, &t, 1, r, &eps).unwrap();
    let nu = nu_j(&cx, &t, 1, r).unwrap();
    let mut prev = 0.0;
    for (e, v) in &seq {
        let want = 8.0 * r * r / (r * r + e * e);
        assert!((v.value.re - want).abs() < 1e-6 * want, "{} vs {want}", v.value);
        assert!(v.value.re >= prev);
        prev = v.value.re;
    }
    assert!((prev - nu.value.re).abs() / nu.value.re < 0.01);
    let at_r = kappa_eps(&cx, &t, 1, r, &[r]).unwrap();
    assert!(at_r[0].1.value.re.is_finite());
}

#[test]
fn binomial_identity() {
    for (k, l, p) in [(3, 1, 1), (4, 2, 1)] {
        let base = BaseDomain::Ball { center: vec![c(0.0); l], radius: 1.0 };
        let mut cx = IndicatorContext { base, ..ctx(k, l, p) };
        if k == 4 {
            cx.quad = QuadratureSpec::tensor(TensorBudget { panels: 3, radial: 4, angular: 4, base: 4 });
        }
        let t = if k == 3 { Current::alpha_power(k, l, 1).unwrap() } else { Current::smooth(l, random_positive_form(k, 5)).unwrap() };
        for j in cx.setting.m_low() as i64..=cx.setting.m_high() as i64 {
            let h = hat_nu(&cx, &t, j, 0.3).unwrap();
            assert!(h.residual <= 1e-12 * h.direct.abs().max(1.0), "{h:?}");
            assert!(h.direct >= -h.direct_error);
        }
        let top = top_index(&cx.setting);
        let h = hat_nu(&cx, &t, top, 0.1).unwrap();
        let nu = nu_j(&cx, &t, top, 0.1).unwrap();
        assert!((h.direct - nu.value.re).abs() <= 1e-12 * h.direct.abs().max(1.0));
    }
}

#[test]
fn ddc_of_psh_family_has_vanishing_top_number() {
    let t = norm2_alpha(3, 1);
    let d = ddc_of(&t).unwrap();
    let cx = ctx(3, 1, 2);
    let sched = RadiusSchedule::new(0.4, 5).unwrap();
    let e = nu_j_schedule(&cx, &d, top_index(&cx.setting), &sched).unwrap();
    // ∫ β∧α∧ω over the tube is 8r²
    for s in &e.samples {
        assert!((s.value - 8.0 * s.r * s.r).abs() <= 1e-10 * s.value.abs(), "{s:?}");
    }
    assert!(e.limit.abs() <= e.error, "{e:?}");
}

#[test]
fn intrinsic_under_admissible_maps() {
    let s = LocalSetting::standard(2, 1, 1);
    let base = BaseDomain::unit_disc();
    let t = Current::alpha_power(2, 1, 1).unwrap();
    let id = AdmissibleMap::identity(2, 1);
    let tau = AdmissibleMap::strongly_admissible(2, 1, &[vec![c(0.2)]], &[vec![c(0.1)]]).unwrap();
    let sched = RadiusSchedule::new(0.2, 4).unwrap();
    let rows = intrinsic_check(&t, &s, &base, (&id, &id), &[1], &sched, &fast()).unwrap();
    assert_eq!(rows[0].difference, 0.0);
    let rows = intrinsic_check(&t, &s, &base, (&id, &tau), &[1], &sched, &fast()).unwrap();
    assert!((rows[0].first.limit - 4.0).abs() < 1e-10);
    assert!(rows[0].difference <= 2.0 * rows[0].combined_error + 1e-12, "{:?}", rows[0]);

    // a transversal smooth current: the top number vanishes under both maps
    let k3 = LocalSetting::standard(3, 1, 1);
    let tau3 = AdmissibleMap::strongly_admissible(3, 1, &[vec![c(0.2), c(0.0)], vec![c(0.0), c(0.1)]], &[vec![c(0.1), c(0.0)]]).unwrap();
    let sm = Current::smooth(1, random_positive_form(3, 2)).unwrap();
    let sched = RadiusSchedule::new(0.2, 4).unwrap();
    let q = QuadratureSpec::tensor(TensorBudget { panels: 4, radial: 5, angular: 6, base: 6 });
    let rows = intrinsic_check(&sm, &k3, &base, (&AdmissibleMap::identity(3, 1), &tau3), &[1], &sched, &q).unwrap();
    for r in &rows {
        assert!(r.first.limit.abs() <= r.first.error && r.second.limit.abs() <= r.second.error, "{r:?}");
    }
}
