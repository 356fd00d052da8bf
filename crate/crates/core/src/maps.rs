//! Admissible maps of tube neighborhoods of `V = {z = 0}`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::forms::{JacobianPair, Polynomial};
use crate::C64;

#[derive(Debug, Clone)]
pub enum MapKind {
    Identity,
    Dilation(C64),
    /// General polynomial self-map in `(y, ȳ)`.
    Polynomial { components: Vec<Polynomial> },
    /// `z'_j = z_j + Σ_{p,q} Q_{jpq}(w) z_p z_q + R_j`, `w'_i = w_i + Σ_p B_{ip}(w) z_p + R_{m+i}`,
    /// with `R` vanishing to order 3 (fiber) and 2 (base) in `z`.
    StronglyAdmissible { quad: Vec<Vec<Vec<Polynomial>>>, shear: Vec<Vec<Polynomial>>, components: Vec<Polynomial> },
    /// `maps[0] ∘ maps[1] ∘ …`
    Composite(Vec<AdmissibleMap>),
}

#[derive(Debug)]
struct MapNode {
    k: usize,
    l: usize,
    kind: MapKind,
    holomorphic: bool,
    validity_radius: f64,
}

/// A diffeomorphism of a tube neighborhood of `V`, identity on `V`.
#[derive(Debug, Clone)]
pub struct AdmissibleMap(Arc<MapNode>);

impl AdmissibleMap {
    fn build(k: usize, l: usize, kind: MapKind, holomorphic: bool, validity_radius: f64) -> Self {
        AdmissibleMap(Arc::new(MapNode { k, l, kind, holomorphic, validity_radius }))
    }

    pub fn identity(k: usize, l: usize) -> Self {
        Self::build(k, l, MapKind::Identity, true, f64::INFINITY)
    }

    /// The fiberwise dilation `A_λ(z, w) = (λz, w)`.
    pub fn dilation(k: usize, l: usize, lambda: C64) -> Result<Self> {
        if lambda.norm() == 0.0 {
            return Err(LabError::ZeroLambda);
        }
        Ok(Self::build(k, l, MapKind::Dilation(lambda), true, f64::INFINITY))
    }

    pub fn polynomial(k: usize, l: usize, components: Vec<Polynomial>) -> Result<Self> {
        if components.len() != k || components.iter().any(|p| p.n > k) {
            return Err(LabError::Invalid(format!("polynomial map needs {k} components on C^{k}")));
        }
        let components: Vec<Polynomial> = components.into_iter().map(|mut p| {
            p.n = k;
            p
        }).collect();
        let holo = components.iter().all(|p| p.is_holomorphic());
        Ok(Self::build(k, l, MapKind::Polynomial { components }, holo, f64::INFINITY))
    }

    /// Shorthand with constant coefficients: `z'_j = z_j + z_j (A z)_j`, `w' = w + B z`.
    pub fn strongly_admissible(k: usize, l: usize, a: &[Vec<C64>], b: &[Vec<C64>]) -> Result<Self> {
        let m = k - l;
        if a.len() != m || a.iter().any(|r| r.len() != m) || b.len() != l || b.iter().any(|r| r.len() != m) {
            return Err(LabError::Invalid(format!("strongly admissible data must be A: {m}x{m}, B: {l}x{m}")));
        }
        let c = |v: C64| Polynomial::constant(k, v);
        let mut quad = vec![vec![vec![Polynomial::zero(k); m]; m]; m];
        for j in 0..m {
            for q in 0..m {
                quad[j][j][q] = c(a[j][q]);
            }
        }
        let shear = b.iter().map(|r| r.iter().map(|&v| c(v)).collect()).collect();
        Self::strongly_admissible_general(k, l, quad, shear, None)
    }

    /// General form with `w`-dependent polynomial coefficients and an optional remainder.
    pub fn strongly_admissible_general(
        k: usize,
        l: usize,
        quad: Vec<Vec<Vec<Polynomial>>>,
        shear: Vec<Vec<Polynomial>>,
        remainder: Option<Vec<Polynomial>>,
    ) -> Result<Self> {
        let m = k - l;
        let zmask: u32 = (1 << m) - 1;
        let coeff_ok = |p: &Polynomial| p.independent_of(zmask) && p.n <= k;
        if quad.len() != m || quad.iter().any(|r| r.len() != m || r.iter().any(|c| c.len() != m || !c.iter().all(coeff_ok))) {
            return Err(LabError::Invalid("quadratic coefficients must be m x m x m functions of w".into()));
        }
        if shear.len() != l || shear.iter().any(|r| r.len() != m || !r.iter().all(coeff_ok)) {
            return Err(LabError::Invalid("shear coefficients must be l x m functions of w".into()));
        }
        if let Some(r) = &remainder {
            if r.len() != k {
                return Err(LabError::Invalid("remainder needs k components".into()));
            }
            for (i, p) in r.iter().enumerate() {
                let need = if i < m { 3 } else { 2 };
                if p.min_degree_in(zmask).map_or(false, |d| d < need) {
                    return Err(LabError::Invalid(format!("remainder component {i} has order < {need} in z")));
                }
            }
        }
        let mut components = Vec::with_capacity(k);
        for j in 0..m {
            let mut c = Polynomial::var(k, j);
            for p in 0..m {
                for q in 0..m {
                    let mut qq = quad[j][p][q].clone();
                    qq.n = k;
                    c = c.add(&qq.mul(&Polynomial::var(k, p)).mul(&Polynomial::var(k, q)));
                }
            }
            components.push(c);
        }
        for i in 0..l {
            let mut c = Polynomial::var(k, m + i);
            for p in 0..m {
                let mut bb = shear[i][p].clone();
                bb.n = k;
                c = c.add(&bb.mul(&Polynomial::var(k, p)));
            }
            components.push(c);
        }
        if let Some(r) = &remainder {
            for (c, p) in components.iter_mut().zip(r) {
                let mut p = p.clone();
                p.n = k;
                *c = c.add(&p);
            }
        }
        let holo = components.iter().all(|p| p.is_holomorphic());
        let qstar = quadratic_sup(k, l, &quad);
        let validity = if qstar > 0.0 { 1.0 / (4.0 * qstar) } else { f64::INFINITY };
        Ok(Self::build(k, l, MapKind::StronglyAdmissible { quad, shear, components }, holo, validity))
    }

    /// `maps[0] ∘ maps[1] ∘ …` (the last map is applied first).
    pub fn composite(maps: Vec<AdmissibleMap>) -> Result<Self> {
        let first = maps.first().ok_or_else(|| LabError::Invalid("empty composite".into()))?;
        let (k, l) = (first.k(), first.l());
        if maps.iter().any(|m| m.k() != k || m.l() != l) {
            return Err(LabError::Invalid("composite of maps on different charts".into()));
        }
        let holo = maps.iter().all(|m| m.is_holomorphic());
        let validity = maps.iter().map(|m| m.validity_radius()).fold(f64::INFINITY, f64::min);
        Ok(Self::build(k, l, MapKind::Composite(maps), holo, validity))
    }

    pub fn k(&self) -> usize {
        self.0.k
    }

    pub fn l(&self) -> usize {
        self.0.l
    }

    pub fn kind(&self) -> &MapKind {
        &self.0.kind
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.0.kind, MapKind::Identity)
    }

    pub fn is_holomorphic(&self) -> bool {
        self.0.holomorphic
    }

    /// Fiber radius inside which the quadratic part is at most `r/4`.
    pub fn validity_radius(&self) -> f64 {
        self.0.validity_radius
    }

    pub fn tag(&self) -> &'static str {
        match self.0.kind {
            MapKind::Identity => "identity",
            MapKind::Dilation(_) => "dilation",
            MapKind::Polynomial { .. } => {
                if self.is_holomorphic() {
                    "holomorphic"
                } else {
                    "polynomial"
                }
            }
            MapKind::StronglyAdmissible { .. } => "strongly-admissible",
            MapKind::Composite(_) => "composite",
        }
    }

    pub fn apply_coords(&self, y: &[C64]) -> Vec<C64> {
        let m = self.k() - self.l();
        match &self.0.kind {
            MapKind::Identity => y.to_vec(),
            MapKind::Dilation(lam) => y.iter().enumerate().map(|(i, &c)| if i < m { c * lam } else { c }).collect(),
            MapKind::Polynomial { components } | MapKind::StronglyAdmissible { components, .. } => {
                components.iter().map(|p| p.eval(y)).collect()
            }
            MapKind::Composite(maps) => {
                let mut x = y.to_vec();
                for mp in maps.iter().rev() {
                    x = mp.apply_coords(&x);
                }
                x
            }
        }
    }

    pub fn jacobian_coords(&self, y: &[C64]) -> JacobianPair {
        let k = self.k();
        let m = k - self.l();
        match &self.0.kind {
            MapKind::Identity => JacobianPair::identity(k),
            MapKind::Dilation(lam) => {
                let mut j = JacobianPair::identity(k);
                for i in 0..m {
                    j.j[i * k + i] = *lam;
                }
                j
            }
            MapKind::Polynomial { components } | MapKind::StronglyAdmissible { components, .. } => {
                let mut jp = JacobianPair::holomorphic(k, k, vec![C64::new(0.0, 0.0); k * k]);
                for (r, p) in components.iter().enumerate() {
                    for c in 0..k {
                        jp.j[r * k + c] = p.deriv(c).eval(y);
                        jp.kbar[r * k + c] = p.deriv_bar(c).eval(y);
                    }
                }
                jp
            }
            MapKind::Composite(maps) => {
                let mut x = y.to_vec();
                let mut acc = JacobianPair::identity(k);
                for mp in maps.iter().rev() {
                    acc = mp.jacobian_coords(&x).compose(&acc);
                    x = mp.apply_coords(&x);
                }
                acc
            }
        }
    }

    /// Solve `τ(x) = y`.
    pub fn inverse_coords(&self, y: &[C64]) -> Result<Vec<C64>> {
        let m = self.k() - self.l();
        match &self.0.kind {
            MapKind::Identity => Ok(y.to_vec()),
            MapKind::Dilation(lam) => {
                Ok(y.iter().enumerate().map(|(i, &c)| if i < m { c / lam } else { c }).collect())
            }
            MapKind::Composite(maps) => {
                let mut x = y.to_vec();
                for mp in maps {
                    x = mp.inverse_coords(&x)?;
                }
                Ok(x)
            }
            _ => self.newton_inverse(y),
        }
    }

    fn newton_inverse(&self, y: &[C64]) -> Result<Vec<C64>> {
        let norm = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let scale = 1.0 + norm(y);
        let resid = |x: &[C64]| -> Vec<C64> { self.apply_coords(x).iter().zip(y).map(|(a, b)| a - b).collect() };
        let mut x = y.to_vec();
        let mut f = resid(&x);
        let mut fn0 = norm(&f);
        for _ in 0..60 {
            if fn0 <= 1e-14 * scale {
                return Ok(x);
            }
            let inv = self
                .jacobian_coords(&x)
                .inverse()
                .ok_or_else(|| LabError::NewtonDiverged(format!("singular Jacobian at {x:?}")))?;
            let n = x.len();
            let delta: Vec<C64> = (0..n)
                .map(|a| (0..n).map(|b| -(inv.jc(a, b) * f[b] + inv.kc(a, b) * f[b].conj())).sum())
                .collect();
            let mut t = 1.0;
            loop {
                let xn: Vec<C64> = x.iter().zip(&delta).map(|(a, d)| a + d * t).collect();
                let fnew = resid(&xn);
                let nn = norm(&fnew);
                if nn < fn0 || t < 1e-3 {
                    x = xn;
                    f = fnew;
                    fn0 = nn;
                    break;
                }
                t *= 0.5;
            }
        }
        if fn0 <= 1e-12 * scale {
            Ok(x)
        } else {
            Err(LabError::NewtonDiverged(format!("{y:?}, residual {fn0:e}")))
        }
    }
}

fn quadratic_sup(k: usize, l: usize, quad: &[Vec<Vec<Polynomial>>]) -> f64 {
    let m = k - l;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best: f64 = 0.0;
    for _ in 0..256 {
        let mut theta: Vec<C64> = (0..m).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let nt = theta.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        theta.iter_mut().for_each(|c| *c /= nt);
        let mut y = theta.clone();
        y.extend((0..l).map(|_| C64::new(2.0 * rng.gen::<f64>() - 1.0, 2.0 * rng.gen::<f64>() - 1.0)));
        let mut s = 0.0;
        for row in quad.iter().take(m) {
            let mut v = C64::new(0.0, 0.0);
            for p in 0..m {
                for q in 0..m {
                    v += row[p][q].eval(&y) * theta[p] * theta[q];
                }
            }
            s += v.norm_sqr();
        }
        best = best.max(s.sqrt());
    }
    best
}

/// Fitted log–log slopes of the admissibility residuals against `‖z‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub radii: Vec<f64>,
    pub fiber_sup: Vec<f64>,
    pub base_sup: Vec<f64>,
    pub phi_sup: Vec<f64>,
    pub fiber_slope: f64,
    pub base_slope: f64,
    pub phi_slope: f64,
}

/// Least-squares slope of `log y` against `log x`; `+∞` when every residual vanishes.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, &v)| v > 0.0).map(|(&a, &b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Sup-norms of `τ_v − z`, `τ_h − w` and `φ∘τ − φ` on spheres `‖z‖ = r` over the given base
/// points, with their fitted slopes in `r`.
pub fn verify_admissible_orders(
    map: &AdmissibleMap,
    phi: &dyn Fn(&[C64]) -> f64,
    radii: &[f64],
    base_points: &[Vec<C64>],
) -> OrderFit {
    let (k, l) = (map.k(), map.l());
    let m = k - l;
    let mut rng = ChaCha8Rng::seed_from_u64(0x03d3u64);
    let dirs: Vec<Vec<C64>> = (0..64)
        .map(|_| {
            let v: Vec<C64> = (0..m).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
            let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            v.into_iter().map(|c| c / n).collect()
        })
        .collect();
    let (mut fs, mut bs, mut ps) = (Vec::new(), Vec::new(), Vec::new());
    for &r in radii {
        let (mut f, mut b, mut p) = (0.0f64, 0.0f64, 0.0f64);
        for w in base_points {
            for d in &dirs {
                let mut y: Vec<C64> = d.iter().map(|c| c * r).collect();
                y.extend_from_slice(w);
                let t = map.apply_coords(&y);
                let fv = (0..m).map(|i| (t[i] - y[i]).norm_sqr()).sum::<f64>().sqrt();
                let bv = (m..k).map(|i| (t[i] - y[i]).norm_sqr()).sum::<f64>().sqrt();
                f = f.max(fv);
                b = b.max(bv);
                p = p.max((phi(&t) - phi(&y)).abs());
            }
        }
        fs.push(f);
        bs.push(b);
        ps.push(p);
    }
    OrderFit {
        radii: radii.to_vec(),
        fiber_slope: loglog_slope(radii, &fs),
        base_slope: loglog_slope(radii, &bs),
        phi_slope: loglog_slope(radii, &ps),
        fiber_sup: fs,
        base_sup: bs,
        phi_sup: ps,
    }
}


pub use crate::lelong::{intrinsic_check, IntrinsicRow};
