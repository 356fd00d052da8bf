use lelong_core::forms::Polynomial;
use lelong_core::geometry::LocalSetting;
use lelong_core::maps::*;
use lelong_core::{LabError, C64};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn catalog() -> Vec<AdmissibleMap> {
    let k = 3;
    let w = Polynomial::var(k, 2);
    let quad = vec![
        vec![vec![w.scale(c(0.2)), Polynomial::constant(k, c(0.1))], vec![Polynomial::zero(k); 2]],
        vec![vec![Polynomial::zero(k); 2], vec![Polynomial::constant(k, c(-0.3)), w.conj().scale(c(0.1))]],
    ];
    let shear = vec![vec![Polynomial::constant(k, c(0.5)), w.scale(C64::new(0.0, 0.2))]];
    vec![
        AdmissibleMap::identity(3, 1),
        AdmissibleMap::dilation(3, 1, C64::new(0.0, 2.0)).unwrap(),
        AdmissibleMap::strongly_admissible(3, 1, &[vec![c(0.2), c(0.0)], vec![c(0.1), c(-0.1)]], &[vec![c(0.5), c(0.3)]]).unwrap(),
        AdmissibleMap::strongly_admissible_general(3, 1, quad, shear, None).unwrap(),
    ]
}

#[test]
fn basic_maps() {
    let y = [C64::new(0.3, -0.2), C64::new(0.1, 0.4), c(0.7)];
    let id = AdmissibleMap::identity(3, 1);
    assert_eq!(id.apply_coords(&y), y.to_vec());
    let j = id.jacobian_coords(&y);
    assert!(j.is_holomorphic());
    for a in 0..3 {
        for b in 0..3 {
            assert_eq!(j.jc(a, b), c(if a == b { 1.0 } else { 0.0 }));
        }
    }
    let lam = C64::new(0.0, 2.0);
    let d = AdmissibleMap::dilation(3, 1, lam).unwrap();
    assert_eq!(d.apply_coords(&y), vec![y[0] * lam, y[1] * lam, y[2]]);
    assert!(matches!(AdmissibleMap::dilation(3, 1, c(0.0)), Err(LabError::ZeroLambda)));
}

#[test]
fn quadratic_strongly_admissible_map() {
    let b = c(0.5);
    let tau = AdmissibleMap::strongly_admissible(2, 1, &[vec![c(1.0)]], &[vec![b]]).unwrap();
    let z = C64::new(0.01, 0.003);
    let w = C64::new(-0.2, 0.1);
    assert_eq!(tau.apply_coords(&[z, w]), vec![z + z * z, w + b * z]);
    let x = tau.inverse_coords(&[z, w]).unwrap();
    assert!(dist(&tau.apply_coords(&x), &[z, w]) < 1e-12);
    // z′ = z + z² has the explicit inverse (−1 + √(1 + 4z′))/2
    let z0 = (-c(1.0) + (c(1.0) + z * 4.0).sqrt()) / 2.0;
    assert!((x[0] - z0).norm() < 1e-12);
    assert!((tau.validity_radius() - 0.25).abs() < 1e-12);
}

#[test]
fn inverse_round_trips_and_divergence() {
    for tau in catalog() {
        for y in [[C64::new(0.05, 0.02), c(-0.03), C64::new(0.2, 0.1)], [c(0.0), C64::new(0.0, 0.04), c(-0.5)]] {
            let x = tau.inverse_coords(&y).unwrap();
            assert!(dist(&tau.apply_coords(&x), &y) < 1e-12, "{}", tau.tag());
        }
    }
    // z + 5|z|² = −1 has no solution
    let k = 2;
    let bad = AdmissibleMap::polynomial(
        2,
        1,
        vec![Polynomial::var(k, 0).add(&Polynomial::var(k, 0).mul(&Polynomial::var_bar(k, 0)).scale(c(5.0))), Polynomial::var(k, 1)],
    )
    .unwrap();
    assert!(matches!(bad.inverse_coords(&[c(-1.0), c(0.0)]), Err(LabError::NewtonDiverged(_))));
}

#[test]
fn jacobians_match_finite_differences() {
    let mut maps = catalog();
    let k = 2;
    maps.push(
        AdmissibleMap::polynomial(
            2,
            1,
            vec![
                Polynomial::var(k, 0).add(&Polynomial::var_bar(k, 0).mul(&Polynomial::var(k, 1)).scale(c(0.3))),
                Polynomial::var(k, 1).add(&Polynomial::var(k, 0).mul(&Polynomial::var_bar(k, 0))),
            ],
        )
        .unwrap(),
    );
    let h = 1e-5;
    for tau in &maps {
        let n = tau.k();
        let y: Vec<C64> = (0..n).map(|i| C64::new(0.1 * (i as f64 + 1.0), -0.05 * i as f64)).collect();
        let jp = tau.jacobian_coords(&y);
        for b in 0..n {
            let shift = |d: C64| {
                let mut p = y.clone();
                p[b] += d;
                tau.apply_coords(&p)
            };
            let (xp, xm, yp, ym) = (shift(c(h)), shift(c(-h)), shift(C64::new(0.0, h)), shift(C64::new(0.0, -h)));
            for a in 0..n {
                let dx = (xp[a] - xm[a]) / (2.0 * h);
                let dyv = (yp[a] - ym[a]) / (2.0 * h);
                let d = (dx - C64::new(0.0, 1.0) * dyv) / 2.0;
                let dbar = (dx + C64::new(0.0, 1.0) * dyv) / 2.0;
                assert!((jp.jc(a, b) - d).norm() < 1e-8, "{} ∂{a}/∂{b}", tau.tag());
                assert!((jp.kc(a, b) - dbar).norm() < 1e-8, "{} ∂{a}/∂̄{b}", tau.tag());
            }
        }
    }
}

#[test]
fn identity_along_v() {
    for tau in catalog() {
        for w in [c(0.0), C64::new(0.3, -0.7), c(-1.2)] {
            let y = [c(0.0), c(0.0), w];
            assert_eq!(tau.apply_coords(&y), y.to_vec(), "{}", tau.tag());
            if matches!(tau.kind(), MapKind::Dilation(_)) {
                continue;
            }
            let j = tau.jacobian_coords(&y);
            for a in 0..2 {
                for b in 0..2 {
                    let want = c(if a == b { 1.0 } else { 0.0 });
                    assert!((j.jc(a, b) - want).norm() < 1e-12 && j.kc(a, b).norm() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn dilations_compose() {
    let (l, m) = (c(2.0), C64::new(0.0, -0.25));
    let comp = AdmissibleMap::composite(vec![
        AdmissibleMap::dilation(3, 1, l).unwrap(),
        AdmissibleMap::dilation(3, 1, m).unwrap(),
    ])
    .unwrap();
    let direct = AdmissibleMap::dilation(3, 1, l * m).unwrap();
    for y in [[C64::new(0.375, -1.5), c(0.125), c(3.0)], [c(-2.0), C64::new(0.5, 0.25), c(0.0)]] {
        assert_eq!(comp.apply_coords(&y), direct.apply_coords(&y));
    }
}

#[test]
fn contact_orders() {
    let s = LocalSetting::standard(2, 1, 1);
    let phi = |y: &[C64]| s.phi(y);
    let radii: Vec<f64> = (0..6).map(|n| 0.1 / 2f64.powi(n)).collect();
    let base = vec![vec![c(0.0)], vec![C64::new(0.4, -0.3)]];

    let id = verify_admissible_orders(&AdmissibleMap::identity(2, 1), &phi, &radii, &base);
    assert!(id.fiber_slope.is_infinite() && id.base_slope.is_infinite() && id.phi_slope.is_infinite());
    assert!(id.fiber_sup.iter().all(|v| *v == 0.0));

    let tau = AdmissibleMap::strongly_admissible(2, 1, &[vec![c(0.7)]], &[vec![c(0.5)]]).unwrap();
    let fit = verify_admissible_orders(&tau, &phi, &radii, &base);
    assert!(fit.fiber_slope >= 1.95, "{fit:?}");
    assert!(fit.phi_slope >= 2.95, "{fit:?}");
    assert!((fit.base_slope - 1.0).abs() < 0.05);

    let k = 2;
    let bad = AdmissibleMap::polynomial(2, 1, vec![Polynomial::var(k, 0).add(&Polynomial::var_bar(k, 0).scale(c(0.1))), Polynomial::var(k, 1)])
        .unwrap();
    let fit = verify_admissible_orders(&bad, &phi, &radii, &base);
    assert!((fit.fiber_slope - 1.0).abs() < 0.05 && fit.fiber_slope < 1.9, "{fit:?}");
}

#[test]
fn rejects_malformed_maps() {
    assert!(AdmissibleMap::strongly_admissible(3, 1, &[vec![c(1.0)]], &[vec![c(0.0)]]).is_err());
    assert!(AdmissibleMap::polynomial(2, 1, vec![Polynomial::var(2, 0)]).is_err());
    let k = 2;
    let rem = vec![Polynomial::var(k, 0).pow(2), Polynomial::zero(k)];
    let quad = vec![vec![vec![Polynomial::zero(k)]]];
    let shear = vec![vec![Polynomial::zero(k)]];
    assert!(AdmissibleMap::strongly_admissible_general(2, 1, quad, shear, Some(rem)).is_err());
    assert!(AdmissibleMap::composite(vec![]).is_err());
    assert!(AdmissibleMap::composite(vec![AdmissibleMap::identity(2, 1), AdmissibleMap::identity(3, 1)]).is_err());
}
