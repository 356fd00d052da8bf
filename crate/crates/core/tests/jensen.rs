use lelong_core::forms::{dy, dybar, Form, Polynomial};
use lelong_core::geometry::{BaseDomain, LocalSetting};
use lelong_core::integrate::{QuadratureSpec, TensorBudget};
use lelong_core::jensen::*;
use lelong_core::{LabError, C64};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn ctx2() -> JensenContext {
    JensenContext::new(LocalSetting::standard(2, 1, 1), BaseDomain::unit_disc(), QuadratureSpec::default())
}

fn ctx3() -> JensenContext {
    let q = QuadratureSpec::tensor(TensorBudget { panels: 5, radial: 5, angular: 4, base: 6 });
    JensenContext::new(LocalSetting::standard(3, 1, 1), BaseDomain::unit_disc(), q)
}

fn entry(ctx: &JensenContext, name: &str) -> Form {
    catalog_full_bidegree(&ctx.setting).unwrap().into_iter().find(|(n, _)| *n == name).unwrap().1
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn full_bidegree_residuals() {
    let cx = ctx2();
    for (name, s) in catalog_full_bidegree(&cx.setting).unwrap() {
        let r = lj_report(&cx, &s, 0.25, 0.5).unwrap();
        assert!(r.vertical_term_skipped(), "{name}");
        assert!(r.passes(1e-3), "{name}: {r:?}");
        assert!(r.residual.abs() <= 1e-9 * r.max_term(), "{name}: {r:?}");
        assert!((r.residual_error - [r.lhs_mass_difference, r.corona_alpha_integral, r.ddc_double_integral_1, r.ddc_double_integral_2, r.vertical_term].iter().map(|t| t.error).sum::<f64>()).abs() < 1e-18);
        if r.closed {
            assert!(r.ddc_double_integral_1.value.abs() <= 10.0 * r.ddc_double_integral_1.error.max(1e-15));
            assert!(r.ddc_double_integral_2.value.abs() <= 10.0 * r.ddc_double_integral_2.error.max(1e-15));
        }
    }
}

#[test]
fn radial_input_matches_closed_forms() {
    // S = (1+|z|²) ω on C×D: M(r)/r² = 4 + 2r², G(t) = 4t²
    let cx = ctx2();
    let s = entry(&cx, "radial");
    let (a, b) = (0.25f64, 0.5f64);
    let r = lj_report(&cx, &s, a, b).unwrap();
    assert!(!r.closed);
    assert!(close(r.mass_inner.value, 4.0 + 2.0 * a * a, 1e-10), "{:?}", r.mass_inner);
    assert!(close(r.mass_outer.value, 4.0 + 2.0 * b * b, 1e-10));
    assert!(close(r.lhs_mass_difference.value, 2.0 * (b * b - a * a), 1e-10));
    let d1 = 4.0 * (b * b - a * a) - 2.0 * (b.powi(4) - a.powi(4)) / (b * b);
    let d2 = (a.powi(-2) - b.powi(-2)) * 2.0 * a.powi(4);
    assert!(close(r.ddc_double_integral_1.value, d1, 1e-8), "{} vs {d1}", r.ddc_double_integral_1.value);
    assert!(close(r.ddc_double_integral_2.value, d2, 1e-8), "{} vs {d2}", r.ddc_double_integral_2.value);
    // α vanishes off V in one fiber dimension
    assert!(r.corona_alpha_integral.value.abs() < 1e-12);
}

#[test]
fn fiber_line_input_in_three_dimensions() {
    let cx = ctx3();
    let s = entry(&cx, "fiber-line");
    let r = lj_report(&cx, &s, 0.3, 0.6).unwrap();
    assert_eq!(r.q, 1);
    assert!(r.corona_alpha_integral.value.abs() > 1e-3, "{r:?}");
    assert!(r.passes(1e-3), "{r:?}");
    let o = lj_smooth_origin(&cx, &s, 0.6).unwrap();
    let lim = o.small_radius_limit.unwrap();
    assert!(lim.limit.abs() <= lim.error + 1e-12, "{lim:?}");
    assert!(o.passes(1e-3), "{o:?}");
}

#[test]
fn equal_radii_give_exact_zero() {
    let cx = ctx2();
    let r = lj_report(&cx, &entry(&cx, "radial"), 0.4, 0.4).unwrap();
    assert_eq!(r.residual, 0.0);
    assert_eq!(r.lhs_mass_difference.value, 0.0);
    assert_eq!(r.ddc_double_integral_1.value, 0.0);
    assert!(matches!(lj_report(&cx, &entry(&cx, "radial"), 0.5, 0.4), Err(LabError::Precondition(_))));
}

#[test]
fn reports_are_linear_in_the_form() {
    let cx = ctx2();
    let s1 = entry(&cx, "radial");
    let s2 = entry(&cx, "mixed-modulus");
    let combo = s1.scale(c(2.0)).add(&s2.scale(c(-0.5))).unwrap();
    let (a, b, ab) = (
        lj_report(&cx, &s1, 0.2, 0.5).unwrap(),
        lj_report(&cx, &s2, 0.2, 0.5).unwrap(),
        lj_report(&cx, &combo, 0.2, 0.5).unwrap(),
    );
    let pick = |r: &JensenReport| [r.lhs_mass_difference, r.corona_alpha_integral, r.ddc_double_integral_1, r.ddc_double_integral_2];
    for ((x, y), z) in pick(&a).iter().zip(pick(&b)).zip(pick(&ab)) {
        let want = 2.0 * x.value - 0.5 * y.value;
        assert!((z.value - want).abs() <= 2.0 * x.error + 0.5 * y.error + z.error + 1e-12, "{} vs {want}", z.value);
    }
}

#[test]
fn smooth_origin_limits() {
    let cx = ctx2();
    // q = k − l: the limit is the normalized mass on V and is positive for positive inputs
    for (name, s) in catalog_full_bidegree(&cx.setting).unwrap() {
        let r = lj_smooth_origin(&cx, &s, 0.5).unwrap();
        let lim = r.small_radius_limit.unwrap();
        assert!(lim.limit >= -lim.error, "{name}: {lim:?}");
        assert!(r.passes(1e-3), "{name}: {r:?}");
    }
    let lim = lj_smooth_origin(&cx, &entry(&cx, "radial"), 0.5).unwrap().small_radius_limit.unwrap();
    assert!(close(lim.limit, 4.0, 1e-8), "{lim:?}");

    let zero = Form::zero(2, (1, 1));
    let r = lj_smooth_origin(&cx, &zero, 0.5).unwrap();
    for t in [r.lhs_mass_difference, r.corona_alpha_integral, r.ddc_double_integral_1, r.mass_outer] {
        assert_eq!(t.value, 0.0);
    }
}

#[test]
fn eps_identity() {
    let cx = ctx2();
    let r = 0.5;
    for (name, s) in catalog_full_bidegree(&cx.setting).unwrap() {
        let rep = eps_jensen(&cx, &s, r, r / 2.0).unwrap();
        assert!(rep.passes(1e-3), "{name}: {rep:?}");
        assert_eq!(rep.eps, Some(r / 2.0));
    }
    // closed input: ∫ S∧α_ε = 4r²/(r²+ε²) → ∫ S∧α = 4
    let s = entry(&cx, "omega-w");
    let mut prev = 0.0;
    for d in [2.0, 4.0, 8.0, 16.0, 64.0] {
        let e = r / d;
        let rep = eps_jensen(&cx, &s, r, e).unwrap();
        let want = 4.0 * r * r / (r * r + e * e);
        assert!(close(rep.corona_alpha_integral.value, want, 1e-8), "{} vs {want}", rep.corona_alpha_integral.value);
        assert!(rep.corona_alpha_integral.value > prev);
        assert_eq!(rep.vertical_term.value, 0.0);
        prev = rep.corona_alpha_integral.value;
    }
    assert!((prev - 4.0).abs() < 4e-3);
    assert!(matches!(eps_jensen(&cx, &s, r, r), Err(LabError::Precondition(_))));
    assert!(matches!(eps_jensen(&cx, &s, r, 0.0), Err(LabError::Precondition(_))));
}

#[test]
fn vertical_discrepancy_is_order_r() {
    let cx = ctx2();
    let radii = [0.4, 0.2, 0.1, 0.04];
    let generic = catalog_generic(&cx.setting).unwrap();
    for (name, s) in &generic {
        let fit = vertical_bound_fit(&cx, s, &radii).unwrap();
        assert!(!fit.degenerate, "{name}: {fit:?}");
        assert!(fit.pass && fit.slope.unwrap() >= 0.9, "{name}: {fit:?}");
    }
    // g = 1 + |w|² + 2Re(z w̄) on dz∧dz̄: the discrepancy is exactly −1.5 r²
    let fit = vertical_bound_fit(&cx, &generic[0].1, &radii).unwrap();
    for (r, d) in radii.iter().zip(&fit.discrepancies) {
        assert!(close(*d, -1.5 * r * r, 1e-8), "{d} at {r}");
    }
    let scaled = vertical_bound_fit(&cx, &generic[0].1.scale(c(10.0)), &radii).unwrap();
    for (a, b) in scaled.discrepancies.iter().zip(&fit.discrepancies) {
        assert!((a - 10.0 * b).abs() <= 1e-9 * a.abs());
    }
    assert!((scaled.slope.unwrap() - fit.slope.unwrap()).abs() < 1e-9);

    let full = vertical_bound_fit(&cx, &entry(&cx, "radial"), &radii).unwrap();
    assert!(full.degenerate && full.pass && full.slope.is_none(), "{full:?}");
    assert!(vertical_bound_fit(&cx, &entry(&cx, "radial"), &[0.3]).is_err());
}

#[test]
fn bidegree_detection() {
    let cx = ctx2();
    for (_, s) in catalog_full_bidegree(&cx.setting).unwrap() {
        assert!(has_full_base_bidegree(&cx.setting, &s, &cx.base, 0.5));
    }
    for (_, s) in catalog_generic(&cx.setting).unwrap() {
        assert!(!has_full_base_bidegree(&cx.setting, &s, &cx.base, 0.5));
    }
    let r = lj_report(&cx, &catalog_generic(&cx.setting).unwrap()[0].1, 0.2, 0.4).unwrap();
    assert_eq!(r.vertical, Vertical::NotIntegrated);
}

#[test]
fn jittered_radii_stay_close_and_reproduce() {
    let cx = ctx2().with_jitter(17);
    let s = entry(&cx, "radial");
    let a = lj_report(&cx, &s, 0.25, 0.5).unwrap();
    let b = lj_report(&cx, &s, 0.25, 0.5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.jitter_seed, Some(17));
    let (u1, u2) = a.radii_used;
    assert!(u1 != 0.25 && (u1 / 0.25 - 1.0).abs() < 0.01);
    assert!(u2 != 0.5 && (u2 / 0.5 - 1.0).abs() < 0.01);
    assert!(a.passes(1e-3));
    for slot in 0..200 {
        let f = jitter_factor(3, slot);
        assert!(f > 0.99 && f < 1.01);
    }
}

#[test]
fn rejects_malformed_inputs() {
    let cx = ctx2();
    let odd = Form::polynomial(2, vec![(dy(0), Polynomial::constant(2, c(1.0)))]).unwrap();
    assert!(matches!(lj_report(&cx, &odd, 0.2, 0.4), Err(LabError::Invalid(_))));
    let top = Form::polynomial(2, vec![(dy(0) | dybar(0) | dy(1) | dybar(1), Polynomial::constant(2, c(1.0)))]).unwrap();
    assert!(matches!(lj_report(&cx, &top, 0.2, 0.4), Err(LabError::Invalid(_))));
    let s3 = LocalSetting::standard(3, 1, 1);
    assert!(matches!(lj_report(&cx, &s3.omega(), 0.2, 0.4), Err(LabError::Invalid(_))));
    assert!(catalog_full_bidegree(&LocalSetting::standard(2, 0, 1)).is_err());
}
