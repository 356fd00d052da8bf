use lelong_core::forms::{dy, dybar, ChartPoint};
use lelong_core::geometry::*;
use lelong_core::{LabError, C64};
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn standard_constants_and_dimensions() {
    let s = LocalSetting::standard(3, 1, 1);
    assert_eq!(s.m(), 2);
    assert_eq!(s.m_low(), 0);
    assert_eq!(s.m_high(), 1);
    assert_eq!(s.c1, 1.0);
    assert!(s.c2 >= 1.0);
    let s = LocalSetting::standard(4, 2, 1);
    assert_eq!((s.m_low(), s.m_high()), (1, 2));
}

#[test]
fn beta_levi_matrix_is_fiber_identity() {
    let s = LocalSetting::standard(3, 1, 1);
    let y = [c(0.2, 0.1), c(-0.3, 0.05), c(0.4, -0.2)];
    let v = s.beta().eval(&y);
    let h = s.levi(&v);
    for a in 0..3 {
        for b in 0..3 {
            let want = if a == b && a < 2 { 1.0 } else { 0.0 };
            assert!((h[a * 3 + b] - c(want, 0.0)).norm() < 1e-12, "{a}{b}: {}", h[a * 3 + b]);
        }
    }
}

#[test]
fn alpha_matches_closed_form() {
    // ddc log|z|^2 on C^2: (i/pi)(|z|^2 delta - conj(z_a) z_b)/|z|^4
    let s = LocalSetting::standard(2, 0, 1);
    let z = [c(0.3, -0.1), c(0.2, 0.4)];
    let n2: f64 = z.iter().map(|x| x.norm_sqr()).sum();
    let v = s.alpha().eval(&z);
    for a in 0..2 {
        for b in 0..2 {
            let d = if a == b { n2 } else { 0.0 };
            let want = (c(d, 0.0) - z[a].conj() * z[b]) / (n2 * n2) * c(0.0, 1.0 / PI);
            assert!((v.get(dy(a) | dybar(b)) - want).norm() < 1e-10);
        }
    }
}

#[test]
fn metric_phi_jet_matches_values() {
    let s = LocalSetting::build(3, 1, 1, Metric::bump_first(3, 1), OmegaSpec::Standard, 0.5).unwrap();
    let y = [c(0.2, 0.1), c(-0.3, 0.05), c(0.4, -0.2)];
    let want = (1.0 + y[2].norm_sqr()).powi(2) * y[0].norm_sqr() + y[1].norm_sqr();
    assert!((s.phi(&y) - want).abs() < 1e-14);
    let j = s.phi_jet(&y);
    assert!((j.v.re - want).abs() < 1e-14);
    // d phi / d w = 2 (1+|w|^2) conj(w) |z1|^2
    let dw = c(2.0 * (1.0 + y[2].norm_sqr()) * y[0].norm_sqr(), 0.0) * y[2].conj();
    assert!((j.d[2] - dw).norm() < 1e-13);
    assert!(s.c1 >= 1.0 && s.c2 >= 1.0);
}

#[test]
fn degenerate_metric_rejected() {
    let a = vec![vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(1.0, 0.0)]];
    let e = LocalSetting::build(3, 1, 1, Metric::Constant(a), OmegaSpec::Standard, 1.0).unwrap_err();
    assert!(matches!(e, LabError::MetricDegenerate(_)));
}

#[test]
fn base_volumes() {
    let b = BaseDomain::Ball { center: vec![c(0.0, 0.0); 2], radius: 2.0 };
    assert!((b.volume() - PI * PI * 16.0 / 2.0).abs() < 1e-12);
    let d = BaseDomain::unit_disc();
    assert!((d.omega_mass() - 2.0).abs() < 1e-14);
    let p = BaseDomain::Polydisc { center: vec![c(0.0, 0.0); 2], radii: vec![1.0, 0.5] };
    assert!((p.volume() - PI * PI * 0.25).abs() < 1e-14);
    assert!(p.contains(&[c(0.9, 0.0), c(0.0, 0.4)]));
    assert!(!p.contains(&[c(0.9, 0.0), c(0.0, 0.6)]));
}

#[test]
fn tube_membership() {
    let s = LocalSetting::standard(3, 1, 1);
    let t = Tube::corona(BaseDomain::unit_disc(), 0.1, 0.5);
    assert!(s.tube_membership(&t, &ChartPoint::new(vec![c(0.2, 0.0), c(0.0, 0.1)], vec![c(0.5, 0.0)])));
    assert!(!s.tube_membership(&t, &ChartPoint::new(vec![c(0.05, 0.0), c(0.0, 0.0)], vec![c(0.5, 0.0)])));
    assert!(!s.tube_membership(&t, &ChartPoint::new(vec![c(0.2, 0.0), c(0.0, 0.0)], vec![c(1.5, 0.0)])));
}

#[test]
fn horizontal_restriction_identity() {
    for (k, l) in [(2, 0), (3, 1), (4, 2)] {
        let s = LocalSetting::standard(k, l, 1);
        let base = if l == 0 { BaseDomain::Point } else { BaseDomain::Ball { center: vec![c(0.0, 0.0); l], radius: 1.0 } };
        for t in [0.1, 0.5, 1.0] {
            let frames = s.level_set_frames(t, &base, 20, 7);
            let err = s.horizontal_restriction_check(t, &frames).unwrap();
            assert!(err < 1e-9, "k={k} l={l} t={t}: {err}");
        }
    }
}

#[test]
fn radial_frame_is_rejected() {
    let s = LocalSetting::standard(2, 0, 1);
    let y = vec![c(0.5, 0.0), c(0.0, 0.0)];
    let frames = vec![(y.clone(), [y.clone(), vec![c(0.0, 1.0), c(0.0, 0.0)]])];
    assert!(matches!(s.horizontal_restriction_check(0.5, &frames), Err(LabError::FrameNotTangent(_))));
}
