use lelong_core::forms::{poly_field, DiffOp, Form, Polynomial};
use lelong_core::geometry::{BaseDomain, LocalSetting, Metric, OmegaSpec, Tube};
use lelong_core::integrate::*;
use lelong_core::{LabError, C64};
use std::f64::consts::PI;

fn one(_: &[C64]) -> lelong_core::Result<C64> {
    Ok(C64::new(1.0, 0.0))
}

fn fiber_norm2(y: &[C64], m: usize) -> f64 {
    y[..m].iter().map(|c| c.norm_sqr()).sum()
}

#[test]
fn unit_density_volume() {
    let s = LocalSetting::standard(3, 1, 1);
    let t = Tube::solid(BaseDomain::unit_disc(), 0.5);
    let e = integrate_tube(&s, &one, &t, &QuadratureSpec::default()).unwrap();
    let want = PI * (PI * PI / 2.0) * 0.5f64.powi(4);
    assert!((e.value.re - want).abs() < 1e-12, "{} vs {want}", e.value);
    assert!(e.error < 1e-10);
}

#[test]
fn inverse_square_density() {
    let s = LocalSetting::standard(3, 1, 1);
    let t = Tube::solid(BaseDomain::unit_disc(), 0.5);
    let f = |y: &[C64]| Ok(C64::new(1.0 / fiber_norm2(y, 2), 0.0));
    let spec = QuadratureSpec::default().with_singular_weight(2.0);
    let e = integrate_tube(&s, &f, &t, &spec).unwrap();
    // sphere area 2π² times ∫ρ dρ, times area of the disc
    let want = PI * 2.0 * PI * PI * 0.125;
    assert!(((e.value.re - want) / want).abs() < 1e-3);
    // no declared weight still converges thanks to geometric panels
    let e2 = integrate_tube(&s, &f, &t, &QuadratureSpec::default()).unwrap();
    assert!(((e2.value.re - want) / want).abs() < 1e-3);
}

#[test]
fn empty_corona_is_exact_zero() {
    let s = LocalSetting::standard(3, 1, 1);
    let t = Tube::corona(BaseDomain::unit_disc(), 0.3, 0.3);
    let e = integrate_tube(&s, &one, &t, &QuadratureSpec::default()).unwrap();
    assert_eq!(e.value, C64::new(0.0, 0.0));
    assert_eq!(e.error, 0.0);
}

#[test]
fn nonintegrable_weight_rejected() {
    let s = LocalSetting::standard(2, 1, 1);
    let t = Tube::solid(BaseDomain::unit_disc(), 0.5);
    let spec = QuadratureSpec::default().with_singular_weight(2.0);
    assert!(matches!(integrate_tube(&s, &one, &t, &spec), Err(LabError::NonIntegrable(_))));
}

#[test]
fn nonfinite_sample_reported() {
    let s = LocalSetting::standard(2, 1, 1);
    let t = Tube::solid(BaseDomain::unit_disc(), 0.5);
    let f = |_: &[C64]| Ok(C64::new(f64::NAN, 0.0));
    assert!(matches!(integrate_tube(&s, &f, &t, &QuadratureSpec::default()), Err(LabError::NonfiniteSample(_))));
}

#[test]
fn sphere_rule_moments() {
    for m in 1..=3 {
        let area = 2.0 * PI.powi(m as i32) / (1..m).map(|i| i as f64).product::<f64>();
        let rule = sphere_rule(m, 8);
        let tot: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((tot - area).abs() < 1e-12 * area, "m={m}");
        let m2: f64 = rule.iter().map(|(t, w)| t[0].norm_sqr() * w).sum();
        assert!((m2 - area / m as f64).abs() < 1e-12);
        // |θ_1|^4 integrates to 2·area/(m(m+1))
        let m4: f64 = rule.iter().map(|(t, w)| t[0].norm_sqr().powi(2) * w).sum();
        assert!((m4 - 2.0 * area / (m * (m + 1)) as f64).abs() < 1e-12);
        let odd: C64 = rule.iter().map(|(t, w)| t[0] * t[0] * *w).sum();
        assert!(odd.norm() < 1e-12);
    }
}

#[test]
fn base_rule_polynomial_moments() {
    let b = BaseDomain::Ball { center: vec![C64::new(0.0, 0.0); 2], radius: 1.0 };
    let r = base_rule(&b, 8);
    let v: f64 = r.iter().map(|(_, w)| w).sum();
    assert!((v - PI * PI / 2.0).abs() < 1e-12);
    let p = BaseDomain::Polydisc { center: vec![C64::new(0.5, 0.0), C64::new(0.0, 0.0)], radii: vec![1.0, 2.0] };
    let r = base_rule(&p, 8);
    let m: f64 = r.iter().map(|(w, x)| (w[0] - C64::new(0.5, 0.0)).norm_sqr() * w[1].norm_sqr() * x).sum();
    assert!((m - (PI / 2.0) * (PI * 16.0 / 2.0)).abs() < 1e-11);
}

#[test]
fn additivity_corona_plus_solid() {
    let s = LocalSetting::standard(3, 1, 1);
    let f = |y: &[C64]| Ok(C64::new((1.0 + y[2].re).exp() / fiber_norm2(y, 2).sqrt(), 0.0));
    let spec = QuadratureSpec::default();
    let solid = integrate_tube(&s, &f, &Tube::solid(BaseDomain::unit_disc(), 0.4), &spec).unwrap();
    let inner = integrate_tube(&s, &f, &Tube::solid(BaseDomain::unit_disc(), 0.1), &spec).unwrap();
    let cor = integrate_tube(&s, &f, &Tube::corona(BaseDomain::unit_disc(), 0.1, 0.4), &spec).unwrap();
    let gap = (solid.value - inner.value - cor.value).norm();
    assert!(gap <= solid.error + inner.error + cor.error + 1e-12, "gap {gap}");
}

#[test]
fn cumulative_radii_match_single_calls() {
    let s = LocalSetting::standard(2, 0, 1);
    let f = |y: &[C64]| Ok(C64::new(fiber_norm2(y, 2), 0.0));
    let spec = QuadratureSpec::default();
    let radii = [0.1, 0.2, 0.35, 0.5];
    let all = integrate_tube_radii(&s, &f, &BaseDomain::Point, 0.0, &radii, &spec).unwrap();
    for (r, e) in radii.iter().zip(&all) {
        // ∫|z|² over the 4-ball = 2π² r⁶/6
        let want = PI * PI * r.powi(6) / 3.0;
        assert!((e.value.re - want).abs() < 1e-13);
    }
}

#[test]
fn nonconstant_metric_tube_volume() {
    // A = diag(1+|w|², 1): volume of the slice is (π²/2)r⁴/(1+|w|²)²
    let s = LocalSetting::build(3, 1, 1, Metric::bump_first(3, 1), OmegaSpec::Standard, 0.5).unwrap();
    let e = integrate_tube(&s, &one, &Tube::solid(BaseDomain::unit_disc(), 0.5), &QuadratureSpec::default()).unwrap();
    // ∫_disc (1+|w|²)^{-2} = π/2
    let want = (PI / 2.0) * (PI * PI / 2.0) * 0.0625;
    assert!(((e.value.re - want) / want).abs() < 1e-6, "{} vs {want}", e.value.re);
}

#[test]
fn ball_integral_off_center() {
    let c = [C64::new(0.3, 0.0), C64::new(0.0, -0.2)];
    let f = |y: &[C64]| Ok(C64::new((y[0] - c[0]).norm_sqr(), 0.0));
    let e = integrate_ball(2, &f, &c, 0.5, &QuadratureSpec::default()).unwrap();
    let want = PI * PI * 0.5f64.powi(6) / 6.0;
    assert!((e.value.re - want).abs() < 1e-13);
}

#[test]
fn mc_is_deterministic_and_honest() {
    let s = LocalSetting::standard(3, 1, 1);
    let t = Tube::solid(BaseDomain::unit_disc(), 0.5);
    let f = |y: &[C64]| Ok(C64::new(1.0 / fiber_norm2(y, 2) + y[2].re * y[2].re, 0.0));
    let want = PI * 2.0 * PI * PI * 0.125 + (PI / 4.0) * (PI * PI / 2.0) * 0.0625;
    let a = integrate_tube(&s, &f, &t, &QuadratureSpec::mc(4000, 9)).unwrap();
    let b = integrate_tube(&s, &f, &t, &QuadratureSpec::mc(4000, 9)).unwrap();
    assert_eq!(a.value.re.to_bits(), b.value.re.to_bits());
    assert_eq!(a.error.to_bits(), b.error.to_bits());
    let mut inside = 0;
    for seed in 0..100 {
        let e = integrate_tube(&s, &f, &t, &QuadratureSpec::mc(2000, seed).with_singular_weight(2.0)).unwrap();
        if (e.value.re - want).abs() <= 3.0 * e.error {
            inside += 1;
        }
    }
    assert!(inside >= 95, "{inside}/100");
}

fn coarea_setup(k: usize, l: usize, p: usize) -> (LocalSetting, Form) {
    let s = LocalSetting::standard(k, l, p);
    let dc_phi = Form::scalar(k, s.phi_field()).derivative(DiffOp::Dc);
    let n = k - p;
    let psi = dc_phi.wedge(&s.beta().power(n - 1)).wedge(&s.omega().power(l));
    (s, psi)
}

#[test]
fn horizontal_boundary_coarea() {
    let (s, psi) = coarea_setup(3, 1, 1);
    let eval = |y: &[C64]| Ok(psi.eval(y));
    for t in [0.1, 0.3, 0.6] {
        let e = integrate_horizontal_boundary(&s, &eval, &BaseDomain::unit_disc(), t, &QuadratureSpec::default()).unwrap();
        // solid integral 8t⁴; d/dt = 32t³; boundary = t/(2n) · d/dt
        let want = t / 4.0 * 32.0 * t.powi(3);
        assert!(((e.value.re - want) / want).abs() < 1e-3, "t={t}: {} vs {want}", e.value);
    }
}

#[test]
fn horizontal_boundary_full_base_degree_vanishes() {
    let (s, _) = coarea_setup(3, 1, 1);
    let dc_phi = Form::scalar(3, s.phi_field()).derivative(DiffOp::Dc);
    let psi = dc_phi.wedge(&s.omega()).wedge(&s.omega()).wedge(&s.beta());
    let eval = |y: &[C64]| Ok(psi.eval(y));
    let e = integrate_horizontal_boundary(&s, &eval, &BaseDomain::unit_disc(), 0.2, &QuadratureSpec::default()).unwrap();
    assert_eq!(e.value, C64::new(0.0, 0.0));
}

#[test]
fn horizontal_boundary_measure_scaling() {
    let s = LocalSetting::standard(3, 1, 1);
    let weight = Polynomial::var(3, 0).mul(&Polynomial::var_bar(3, 0)).add(&Polynomial::constant(3, C64::new(1.0, 0.0)));
    let dc_phi = Form::scalar(3, s.phi_field()).derivative(DiffOp::Dc);
    // dᶜφ has size t on the level set; dividing by t leaves a bounded integrand
    let psi = Form::scalar(3, poly_field(weight)).wedge(&dc_phi).wedge(&s.beta()).wedge(&s.omega());
    let eval = |y: &[C64]| Ok(psi.eval(y));
    let ts: [f64; 4] = [0.05, 0.1, 0.2, 0.4];
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let e = integrate_horizontal_boundary(&s, &eval, &BaseDomain::unit_disc(), t, &QuadratureSpec::default()).unwrap();
            (e.value.norm() / t).ln()
        })
        .collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!(slope >= 3.0 - 0.1, "slope {slope}");
}

#[test]
fn radial_profile_closed_forms() {
    let r = 0.8;
    let w = |t: f64| 2.0 * t * (1.0 / (t * t) - 1.0 / (r * r));
    let c = 1.7;
    let g = |ts: &[f64]| Ok(ts.iter().map(|_| Estimate::exact(C64::new(c, 0.0))).collect());
    let a = 0.05;
    let e = integrate_radial_profile(&g, &w, a, r, &ProfileSpec::default()).unwrap();
    let want = c * (2.0 * (r / a).ln() - (r * r - a * a) / (r * r));
    assert!((e.value.re - want).abs() <= e.error, "{} vs {want}", e.value.re);
    assert!(e.error < 1e-4);
    assert!(matches!(integrate_radial_profile(&g, &w, 0.0, r, &ProfileSpec::default()), Err(LabError::TailDivergent(_))));

    let g2 = |ts: &[f64]| Ok(ts.iter().map(|t| Estimate::exact(C64::new(t * t, 0.0))).collect());
    let e = integrate_radial_profile(&g2, &w, 0.0, r, &ProfileSpec::default()).unwrap();
    assert!((e.value.re - r * r / 2.0).abs() < 1e-10);

    let g3 = |ts: &[f64]| Ok(ts.iter().map(|t| Estimate::exact(C64::new(1.0 / t, 0.0))).collect());
    assert!(matches!(integrate_radial_profile(&g3, &w, 0.0, r, &ProfileSpec::default()), Err(LabError::TailDivergent(_))));

    // power-law tail: g = t^{2.5} against the same weight
    let g4 = |ts: &[f64]| Ok(ts.iter().map(|t| Estimate::exact(C64::new(t.powf(2.5), 0.0))).collect());
    let e = integrate_radial_profile(&g4, &w, 0.0, r, &ProfileSpec::default()).unwrap();
    let want = 2.0 * r.powf(2.5) / 2.5 - 2.0 * r.powf(4.5) / (4.5 * r * r);
    assert!((e.value.re - want).abs() < 1e-9);
}
