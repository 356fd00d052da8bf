//! Quadrature over tubes, coronas, balls and horizontal boundaries.
//!
//! Tensor rules work in metric-polar coordinates `z = ρ A(w)⁻¹ θ` with `θ` on the unit sphere:
//! geometric radial panels (the innermost one flattened by `ρ ↦ u^{1/γ}`, `γ = 2m − s`), a
//! simplex × torus product rule on the sphere and a polar rule on the base. The reported error is
//! the gap between two resolutions plus a rounding floor. Monte Carlo stratifies radial shells,
//! one ChaCha stream per stratum, and reduces strata in index order.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::forms::{dy, dybar, FormValue};
use crate::geometry::{factorial, BaseDomain, LocalSetting};
use crate::C64;

/// A density on chart coordinates `y = (z, w)` against Lebesgue measure.
pub type Density<'a> = dyn Fn(&[C64]) -> Result<C64> + Sync + 'a;

/// A `(2k−1)`-form valued evaluator.
pub type BoundaryForm<'a> = dyn Fn(&[C64]) -> Result<FormValue> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: C64,
    pub error: f64,
    pub evaluations: usize,
}

impl Estimate {
    pub fn exact(value: C64) -> Self {
        Self { value, error: 0.0, evaluations: 0 }
    }

    pub fn zero() -> Self {
        Self::exact(C64::new(0.0, 0.0))
    }

    pub fn add(&self, o: &Estimate) -> Estimate {
        Estimate { value: self.value + o.value, error: self.error + o.error, evaluations: self.evaluations + o.evaluations }
    }

    pub fn sub(&self, o: &Estimate) -> Estimate {
        Estimate { value: self.value - o.value, error: self.error + o.error, evaluations: self.evaluations + o.evaluations }
    }

    pub fn scale(&self, c: f64) -> Estimate {
        Estimate { value: self.value * c, error: self.error * c.abs(), evaluations: self.evaluations }
    }

    pub fn re(&self) -> f64 {
        self.value.re
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TensorBudget {
    /// geometric radial panels below the outer radius
    pub panels: usize,
    /// Gauss nodes per radial panel
    pub radial: usize,
    /// trapezoid points per torus angle; 0 picks by fiber dimension
    pub angular: usize,
    /// angular points on each base disc (radial nodes are half of it)
    pub base: usize,
}

impl Default for TensorBudget {
    fn default() -> Self {
        Self { panels: 8, radial: 8, angular: 0, base: 12 }
    }
}

impl TensorBudget {
    pub fn reduced(&self, m: usize) -> Self {
        let cut = |n: usize| (n - n / 4).max(2);
        Self { panels: self.panels, radial: cut(self.radial), angular: cut(self.angular_for(m)), base: cut(self.base) }
    }

    pub fn angular_for(&self, m: usize) -> usize {
        if self.angular > 0 {
            return self.angular;
        }
        match m {
            1 => 16,
            2 => 8,
            3 => 6,
            _ => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McBudget {
    pub samples: usize,
    pub strata: usize,
}

impl Default for McBudget {
    fn default() -> Self {
        Self { samples: 200_000, strata: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    TensorPolar(TensorBudget),
    StratifiedMc(McBudget),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    #[serde(flatten)]
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    /// `s` such that `‖z‖^s · density` stays bounded near the zero section
    #[serde(default)]
    pub singular_weight: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { method: Method::TensorPolar(TensorBudget::default()), seed: 0, singular_weight: 0.0 }
    }
}

impl QuadratureSpec {
    pub fn tensor(b: TensorBudget) -> Self {
        Self { method: Method::TensorPolar(b), ..Default::default() }
    }

    pub fn mc(samples: usize, seed: u64) -> Self {
        Self { method: Method::StratifiedMc(McBudget { samples, strata: 64 }), seed, singular_weight: 0.0 }
    }

    pub fn with_singular_weight(mut self, s: f64) -> Self {
        self.singular_weight = s;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::TensorPolar(b) if b.radial == 0 || b.base == 0 => Err(LabError::Invalid("tensor budget must be positive".into())),
            Method::StratifiedMc(b) if b.samples == 0 || b.strata == 0 || b.samples < b.strata * 2 => {
                Err(LabError::InsufficientSamples { needed: b.strata.max(1) * 2, got: b.samples })
            }
            _ => Ok(()),
        }
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`, cached per order.
pub fn gauss_legendre(n: usize) -> Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = cache.lock().unwrap();
    g.entry(n)
        .or_insert_with(|| {
            let n = n.max(2);
            let rule = GaussLegendre::new(n.try_into().unwrap());
            Arc::new(rule.iter().map(|(x, w)| ((x + 1.0) * 0.5, w * 0.5)).collect())
        })
        .clone()
}

/// Product rule on `S^{2m−1} ⊂ C^m` against surface measure.
pub fn sphere_rule(m: usize, angular: usize) -> Vec<(Vec<C64>, f64)> {
    let na = angular.max(1);
    let ns = (angular / 2).max(2);
    // simplex points (t_1..t_m, weight) with Σ t = 1
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(vec![], 1.0)];
    let gl = gauss_legendre(ns);
    // collapsed coordinates t_j = (1 − Σ_{i<j} t_i) u_j
    for _ in 0..m.saturating_sub(1) {
        let mut next = Vec::new();
        for (t, w) in &simplex {
            let rest = 1.0 - t.iter().sum::<f64>();
            for &(u, wu) in gl.iter() {
                let mut tt = t.clone();
                tt.push(rest * u);
                next.push((tt, w * wu * rest));
            }
        }
        simplex = next;
    }
    for (t, _) in simplex.iter_mut() {
        let last = 1.0 - t.iter().sum::<f64>();
        t.push(last.max(0.0));
    }
    let dphi = 2.0 * PI / na as f64;
    let norm = 2f64.powi(1 - m as i32) * dphi.powi(m as i32);
    let mut out = Vec::with_capacity(simplex.len() * na.pow(m as u32));
    let mut idx = vec![0usize; m];
    for (t, w) in &simplex {
        idx.iter_mut().for_each(|i| *i = 0);
        loop {
            let theta: Vec<C64> = (0..m)
                .map(|j| C64::from_polar(t[j].sqrt(), dphi * (idx[j] as f64 + 0.5 * (j % 2) as f64)))
                .collect();
            out.push((theta, w * norm));
            let mut j = 0;
            while j < m {
                idx[j] += 1;
                if idx[j] < na {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == m {
                break;
            }
        }
    }
    out
}

/// Nodes and weights on a base domain against Lebesgue measure.
pub fn base_rule(base: &BaseDomain, n: usize) -> Vec<(Vec<C64>, f64)> {
    match base {
        BaseDomain::Point => vec![(vec![], 1.0)],
        BaseDomain::Ball { center, radius } => ball_rule(center, *radius, n),
        BaseDomain::Polydisc { center, radii } => {
            let mut acc: Vec<(Vec<C64>, f64)> = vec![(vec![], 1.0)];
            for (c, r) in center.iter().zip(radii) {
                let disc = ball_rule(&[*c], *r, n);
                acc = acc
                    .iter()
                    .flat_map(|(w, a)| disc.iter().map(move |(d, b)| ([w.clone(), d.clone()].concat(), a * b)))
                    .collect();
            }
            acc
        }
    }
}

fn ball_rule(center: &[C64], radius: f64, n: usize) -> Vec<(Vec<C64>, f64)> {
    let l = center.len();
    let sphere = sphere_rule(l, n);
    let gl = gauss_legendre((n / 2).max(2));
    let mut out = Vec::with_capacity(sphere.len() * gl.len());
    for &(u, wu) in gl.iter() {
        // ρ = R √u, ρ^{2l−1} dρ = R^{2l} u^{l−1} du / 2
        let rho = radius * u.sqrt();
        let wr = radius.powi(2 * l as i32) * u.powi(l as i32 - 1) * 0.5 * wu;
        for (th, ws) in &sphere {
            out.push((center.iter().zip(th).map(|(c, t)| c + t * rho).collect(), wr * ws));
        }
    }
    out
}

/// Radial nodes (ρ, weight including ρ^{2m−1}) grouped into segments ending at each boundary.
pub(crate) fn radial_segments(
    bounds: &[f64],
    m: usize,
    gamma: f64,
    panels: usize,
    n: usize,
) -> Vec<Vec<(f64, f64)>> {
    let gl = gauss_legendre(n);
    let panel = |a: f64, b: f64, out: &mut Vec<(f64, f64)>| {
        for &(u, w) in gl.iter() {
            let rho = a + (b - a) * u;
            out.push((rho, (b - a) * w * rho.powi(2 * m as i32 - 1)));
        }
    };
    let mut segs = Vec::with_capacity(bounds.len());
    let mut lo = 0.0;
    for (i, &b) in bounds.iter().enumerate() {
        let mut seg = Vec::new();
        if i == 0 && bounds[0] == 0.0 {
            segs.push(seg);
            continue;
        }
        let a = if i == 0 { 0.0 } else { lo };
        if a == 0.0 {
            let inner = b * 0.5f64.powi(panels as i32);
            // flattened innermost panel: ρ = inner·u^{1/γ}
            for &(u, w) in gl.iter() {
                let rho = inner * u.powf(1.0 / gamma);
                seg.push((rho, w * inner.powi(2 * m as i32) / gamma * (rho / inner).powf(2.0 * m as f64 - gamma)));
            }
            let mut x = inner;
            while x < b * (1.0 - 1e-12) {
                let y = (2.0 * x).min(b);
                panel(x, y, &mut seg);
                x = y;
            }
        } else if b > a {
            let mut x = a;
            while x < b * (1.0 - 1e-12) {
                let y = (2.0 * x).min(b);
                panel(x, y, &mut seg);
                x = y;
            }
        }
        lo = b;
        segs.push(seg);
    }
    segs
}

/// A polar problem: base nodes, metric inverse and `|det A|^{-2}` per base node.
struct Polar<'a> {
    m: usize,
    base: Vec<(Vec<C64>, f64)>,
    setting: Option<&'a LocalSetting>,
    shift: Option<&'a [C64]>,
}

impl Polar<'_> {
    fn metric_at(&self, w: &[C64]) -> Result<(Option<DMatrix<C64>>, f64)> {
        let Some(s) = self.setting else { return Ok((None, 1.0)) };
        if s.metric.is_constant() && matches!(s.metric, crate::geometry::Metric::Identity) {
            return Ok((None, 1.0));
        }
        let a = DMatrix::from_row_slice(self.m, self.m, &s.metric_matrix(w));
        let det = a.determinant().norm_sqr();
        let inv = a.try_inverse().ok_or_else(|| LabError::MetricDegenerate(format!("A(w) singular at {w:?}")))?;
        Ok((Some(inv), 1.0 / det))
    }

    fn point(&self, dir: &[C64], rho: f64, w: &[C64], y: &mut Vec<C64>) {
        y.clear();
        y.extend(dir.iter().map(|d| d * rho));
        y.extend_from_slice(w);
        if let Some(c) = self.shift {
            for (a, b) in y.iter_mut().zip(c) {
                *a += b;
            }
        }
    }

    /// Per-segment sums of density · weights (value, Σ|terms|).
    fn run(&self, sphere: &[(Vec<C64>, f64)], segs: &[Vec<(f64, f64)>], f: &Density) -> Result<(Vec<C64>, f64, usize)> {
        let nb = self.base.len();
        let ns = sphere.len();
        let metrics: Vec<(Option<DMatrix<C64>>, f64)> =
            self.base.iter().map(|(w, _)| self.metric_at(w)).collect::<Result<_>>()?;
        let per: Vec<Result<(Vec<C64>, f64)>> = (0..nb * ns)
            .into_par_iter()
            .map(|idx| {
                let (bi, si) = (idx / ns, idx % ns);
                let (w, wb) = &self.base[bi];
                let (th, ws) = &sphere[si];
                let (inv, jac) = &metrics[bi];
                let dir: Vec<C64> = match inv {
                    None => th.clone(),
                    Some(inv) => (0..self.m).map(|i| (0..self.m).map(|j| inv[(i, j)] * th[j]).sum()).collect(),
                };
                let scale = wb * ws * jac;
                let mut sums = vec![C64::new(0.0, 0.0); segs.len()];
                let mut abs = 0.0;
                let mut y = Vec::with_capacity(self.m + w.len());
                for (s, seg) in segs.iter().enumerate() {
                    for &(rho, wr) in seg {
                        self.point(&dir, rho, w, &mut y);
                        let v = f(&y)?;
                        if !(v.re.is_finite() && v.im.is_finite()) {
                            return Err(LabError::NonfiniteSample(format!("{v} at {y:?}")));
                        }
                        let t = v * (wr * scale);
                        sums[s] += t;
                        abs += t.norm();
                    }
                }
                Ok((sums, abs))
            })
            .collect();
        let mut total = vec![C64::new(0.0, 0.0); segs.len()];
        let mut abs = 0.0;
        for r in per {
            let (s, a) = r?;
            for (t, v) in total.iter_mut().zip(s) {
                *t += v;
            }
            abs += a;
        }
        let evals = nb * ns * segs.iter().map(|s| s.len()).sum::<usize>();
        Ok((total, abs, evals))
    }
}

fn gamma_for(m: usize, s: f64) -> Result<f64> {
    let g = 2.0 * m as f64 - s;
    if g <= 0.0 {
        return Err(LabError::NonIntegrable(format!("singular weight {s} is not integrable in real dimension {}", 2 * m)));
    }
    Ok(g)
}

fn cumulative(parts: &[C64]) -> Vec<C64> {
    let mut acc = C64::new(0.0, 0.0);
    parts.iter().map(|p| {
        acc += p;
        acc
    }).collect()
}

fn tensor_radii(polar: &Polar, inner: f64, radii: &[f64], spec: &QuadratureSpec, b: &TensorBudget, base_of: impl Fn(usize) -> Vec<(Vec<C64>, f64)>, f: &Density) -> Result<Vec<Estimate>> {
    let m = polar.m;
    let gamma = gamma_for(m, spec.singular_weight)?;
    let mut bounds = vec![inner];
    bounds.extend_from_slice(radii);
    let run = |bb: &TensorBudget| -> Result<(Vec<C64>, f64, usize)> {
        let segs = radial_segments(&bounds, m, gamma, bb.panels, bb.radial);
        let sphere = sphere_rule(m, bb.angular_for(m));
        let p = Polar { m, base: base_of(bb.base), setting: polar.setting, shift: polar.shift };
        p.run(&sphere, &segs, f)
    };
    let (hi, abs, n1) = run(b)?;
    let (lo, _, n2) = run(&b.reduced(m))?;
    let hi = cumulative(&hi[1..]);
    let lo = cumulative(&lo[1..]);
    Ok(hi
        .iter()
        .zip(&lo)
        .map(|(h, l)| Estimate { value: *h, error: (h - l).norm() + 1e-14 * abs, evaluations: n1 + n2 })
        .collect())
}

fn check_radii(inner: f64, radii: &[f64]) -> Result<()> {
    let mut last = inner;
    if !(inner >= 0.0) {
        return Err(LabError::Invalid(format!("inner radius {inner} must be >= 0")));
    }
    for &r in radii {
        if !(r >= last) || !r.is_finite() {
            return Err(LabError::Invalid(format!("radii must increase from the inner radius; got {r} after {last}")));
        }
        last = r;
    }
    Ok(())
}

/// `∫_{Tube(B, inner, r)} f dλ` for every `r` in the increasing list `radii`.
pub fn integrate_tube_radii(
    setting: &LocalSetting,
    f: &Density,
    base: &BaseDomain,
    inner: f64,
    radii: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<Estimate>> {
    spec.validate()?;
    base.validate(setting.l)?;
    check_radii(inner, radii)?;
    let m = setting.m();
    match spec.method {
        Method::TensorPolar(b) => {
            let polar = Polar { m, base: vec![], setting: Some(setting), shift: None };
            let mut out = vec![Estimate::zero(); radii.len()];
            // equal radii give an empty corona
            let distinct: Vec<f64> = radii.iter().copied().filter(|r| *r > inner).collect();
            if distinct.is_empty() {
                return Ok(out);
            }
            let est = tensor_radii(&polar, inner, &distinct, spec, &b, |n| base_rule(base, n), f)?;
            let mut j = 0;
            for (i, r) in radii.iter().enumerate() {
                if *r > inner {
                    out[i] = est[j];
                    j += 1;
                }
            }
            Ok(out)
        }
        Method::StratifiedMc(b) => radii
            .iter()
            .map(|&r| mc_tube(setting, f, base, inner, r, spec, &b))
            .collect(),
    }
}

/// `∫_{Tube(B, s, r)} f dλ`.
pub fn integrate_tube(setting: &LocalSetting, f: &Density, tube: &crate::geometry::Tube, spec: &QuadratureSpec) -> Result<Estimate> {
    if tube.outer <= tube.inner {
        return Ok(Estimate::zero());
    }
    Ok(integrate_tube_radii(setting, f, &tube.base, tube.inner, &[tube.outer], spec)?[0])
}

/// `∫_{B(x, r)} f dλ` on the whole chart, polar about `x`.
pub fn integrate_ball(k: usize, f: &Density, center: &[C64], radius: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    spec.validate()?;
    if center.len() != k {
        return Err(LabError::ArityMismatch { expected: k, got: center.len() });
    }
    match spec.method {
        Method::TensorPolar(b) => {
            let polar = Polar { m: k, base: vec![], setting: None, shift: Some(center) };
            Ok(tensor_radii(&polar, 0.0, &[radius], spec, &b, |_| vec![(vec![], 1.0)], f)?[0])
        }
        Method::StratifiedMc(b) => {
            let s = LocalSetting { k, l: 0, p: 0, metric: crate::geometry::Metric::Identity, omega: crate::geometry::OmegaSpec::Standard, c1: 1.0, c2: 1.0, rbar: radius };
            let shifted = |y: &[C64]| {
                let z: Vec<C64> = y.iter().zip(center).map(|(a, c)| a + c).collect();
                f(&z)
            };
            mc_tube(&s, &shifted, &BaseDomain::Point, 0.0, radius, spec, &b)
        }
    }
}

fn sample_sphere(rng: &mut ChaCha8Rng, m: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..m).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-300 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

fn sample_base(rng: &mut ChaCha8Rng, base: &BaseDomain) -> Vec<C64> {
    match base {
        BaseDomain::Point => vec![],
        BaseDomain::Ball { center, radius } => {
            let l = center.len();
            let d = sample_sphere(rng, l);
            let rho = radius * rng.gen::<f64>().powf(1.0 / (2 * l) as f64);
            center.iter().zip(d).map(|(c, t)| c + t * rho).collect()
        }
        BaseDomain::Polydisc { center, radii } => center
            .iter()
            .zip(radii)
            .map(|(c, r)| c + C64::from_polar(r * rng.gen::<f64>().sqrt(), 2.0 * PI * rng.gen::<f64>()))
            .collect(),
    }
}

pub fn sphere_area(m: usize) -> f64 {
    2.0 * PI.powi(m as i32) / factorial(m - 1)
}

/// Rounding allowance per unit of `Σ|stratum mean|`, so that a zero sample variance
/// still leaves an honest error bar.
pub const MC_ROUNDOFF: f64 = 64.0 * f64::EPSILON;

fn mc_tube(setting: &LocalSetting, f: &Density, base: &BaseDomain, inner: f64, outer: f64, spec: &QuadratureSpec, b: &McBudget) -> Result<Estimate> {
    if outer <= inner {
        return Ok(Estimate::zero());
    }
    let m = setting.m();
    let gamma = gamma_for(m, spec.singular_weight)?;
    let (ua, ub) = (inner.powf(gamma), outer.powf(gamma));
    let per = b.samples / b.strata;
    let vol = base.volume() * sphere_area(m);
    let polar = Polar { m, base: vec![], setting: Some(setting), shift: None };
    let strata: Vec<Result<(C64, f64)>> = (0..b.strata)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(s as u64);
            let lo = ua + (ub - ua) * s as f64 / b.strata as f64;
            let hi = ua + (ub - ua) * (s + 1) as f64 / b.strata as f64;
            let (mut sum, mut sq) = (C64::new(0.0, 0.0), 0.0);
            let mut y = Vec::with_capacity(setting.k);
            for _ in 0..per {
                let u = lo + (hi - lo) * rng.gen::<f64>();
                let rho = u.powf(1.0 / gamma);
                let th = sample_sphere(&mut rng, m);
                let w = sample_base(&mut rng, base);
                let (inv, jac) = polar.metric_at(&w)?;
                let dir: Vec<C64> = match inv {
                    None => th,
                    Some(inv) => (0..m).map(|i| (0..m).map(|j| inv[(i, j)] * th[j]).sum()).collect(),
                };
                polar.point(&dir, rho, &w, &mut y);
                let v = f(&y)?;
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(LabError::NonfiniteSample(format!("{v} at {y:?}")));
                }
                let x = v * (jac * vol * (hi - lo) / gamma * rho.powf(2.0 * m as f64 - gamma));
                sum += x;
                sq += x.norm_sqr();
            }
            let n = per as f64;
            let mean = sum / n;
            let var = ((sq / n - mean.norm_sqr()) * n / (n - 1.0)).max(0.0);
            Ok((mean, var / n))
        })
        .collect();
    let (mut value, mut var, mut mag) = (C64::new(0.0, 0.0), 0.0, 0.0);
    for s in strata {
        let (v, e) = s?;
        value += v;
        var += e;
        mag += v.norm();
    }
    Ok(Estimate { value, error: var.sqrt() + MC_ROUNDOFF * mag, evaluations: per * b.strata })
}

/// `∫_{∂_hor Tube(B,t)} ψ`, oriented as the boundary of the tube.
///
/// On the level set `ψ` restricts to `D · t^{2m−1} |det A|^{-2} dσ dλ(w)` where `D` is the
/// Lebesgue density of `dρ ∧ ψ`.
pub fn integrate_horizontal_boundary(
    setting: &LocalSetting,
    psi: &BoundaryForm,
    base: &BaseDomain,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    if !(t > 0.0) {
        return Err(LabError::Precondition(format!("boundary level t = {t} must be positive")));
    }
    spec.validate()?;
    base.validate(setting.l)?;
    let k = setting.k;
    let m = setting.m();
    let density = |y: &[C64]| -> Result<C64> {
        let jet = setting.phi_jet(y);
        let terms: Vec<_> = (0..k).flat_map(|i| [(dy(i), jet.d[i]), (dybar(i), jet.db[i])]).collect();
        let grad2: f64 = jet.d.iter().take(k).map(|c| c.norm_sqr()).sum();
        if !(grad2 > 0.0) {
            return Err(LabError::FrameConstructionFailed(format!("metric gradient vanishes at {y:?}")));
        }
        let drho = FormValue::from_terms(terms).scale(C64::new(0.5 / t, 0.0));
        Ok(drho.wedge(&psi(y)?).lebesgue_density(k) * t.powi(2 * m as i32 - 1))
    };
    match spec.method {
        Method::TensorPolar(b) => {
            let run = |bb: &TensorBudget| {
                let p = Polar { m, base: base_rule(base, bb.base), setting: Some(setting), shift: None };
                let sphere = sphere_rule(m, bb.angular_for(m));
                p.run(&sphere, &[vec![(t, 1.0)]], &density)
            };
            let (hi, abs, n1) = run(&b)?;
            let (lo, _, n2) = run(&b.reduced(m))?;
            Ok(Estimate { value: hi[0], error: (hi[0] - lo[0]).norm() + 1e-14 * abs, evaluations: n1 + n2 })
        }
        Method::StratifiedMc(b) => {
            let per = b.samples / b.strata;
            let vol = base.volume() * sphere_area(m);
            let polar = Polar { m, base: vec![], setting: Some(setting), shift: None };
            let strata: Vec<Result<(C64, f64)>> = (0..b.strata)
                .into_par_iter()
                .map(|s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                    rng.set_stream(s as u64);
                    let (mut sum, mut sq) = (C64::new(0.0, 0.0), 0.0);
                    let mut y = Vec::new();
                    for _ in 0..per {
                        let th = sample_sphere(&mut rng, m);
                        let w = sample_base(&mut rng, base);
                        let (inv, jac) = polar.metric_at(&w)?;
                        let dir: Vec<C64> = match inv {
                            None => th,
                            Some(inv) => (0..m).map(|i| (0..m).map(|j| inv[(i, j)] * th[j]).sum()).collect(),
                        };
                        polar.point(&dir, t, &w, &mut y);
                        let x = density(&y)? * (jac * vol);
                        sum += x;
                        sq += x.norm_sqr();
                    }
                    let n = per as f64;
                    let mean = sum / n;
                    Ok((mean, ((sq / n - mean.norm_sqr()) / (n - 1.0)).max(0.0)))
                })
                .collect();
            let (mut value, mut var, mut mag) = (C64::new(0.0, 0.0), 0.0, 0.0);
            for s in strata {
                let (v, e) = s?;
                value += v / b.strata as f64;
                var += e / (b.strata * b.strata) as f64;
                mag += v.norm() / b.strata as f64;
            }
            Ok(Estimate { value, error: var.sqrt() + MC_ROUNDOFF * mag, evaluations: per * b.strata })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileSpec {
    /// geometric panels `[r 2^{-n-1}, r 2^{-n}]` before the tail
    pub panels: usize,
    pub nodes: usize,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self { panels: 16, nodes: 6 }
    }
}

/// `∫_a^r g(t) w(t) dt` with `g` evaluated in batches (increasing `t`).
///
/// For `a = 0` the integral below the last geometric panel is extrapolated from the ratio of
/// consecutive panel integrals; a ratio that is not settled below one is reported as
/// `TailDivergent`.
pub fn integrate_radial_profile(
    g: &dyn Fn(&[f64]) -> Result<Vec<Estimate>>,
    weight: &dyn Fn(f64) -> f64,
    a: f64,
    r: f64,
    spec: &ProfileSpec,
) -> Result<Estimate> {
    if !(r > a) || !(a >= 0.0) {
        return Err(LabError::Invalid(format!("need 0 <= a < r, got a = {a}, r = {r}")));
    }
    let mut edges = vec![r];
    loop {
        let next = edges.last().unwrap() * 0.5;
        if a > 0.0 && next <= a * (1.0 + 1e-12) {
            edges.push(a);
            break;
        }
        if a == 0.0 && edges.len() > spec.panels.max(4) {
            break;
        }
        edges.push(next);
    }
    edges.reverse();
    let nodes = |n: usize| -> Vec<(usize, f64, f64)> {
        let gl = gauss_legendre(n);
        edges
            .windows(2)
            .enumerate()
            .flat_map(|(p, e)| gl.iter().map(move |&(u, w)| (p, e[0] + (e[1] - e[0]) * u, w * (e[1] - e[0]))).collect::<Vec<_>>())
            .collect()
    };
    let hi = nodes(spec.nodes.max(2));
    let lo = nodes((spec.nodes - spec.nodes / 3).max(2));
    let mut ts: Vec<f64> = hi.iter().chain(&lo).map(|n| n.1).collect();
    ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ts.dedup();
    let gs = g(&ts)?;
    if gs.len() != ts.len() {
        return Err(LabError::ArityMismatch { expected: ts.len(), got: gs.len() });
    }
    let lookup = |t: f64| &gs[ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()).unwrap()];
    let npan = edges.len() - 1;
    let sum = |rule: &[(usize, f64, f64)]| -> (Vec<C64>, f64) {
        let mut panels = vec![C64::new(0.0, 0.0); npan];
        let mut prop = 0.0;
        for &(p, t, w) in rule {
            let e = lookup(t);
            let ww = w * weight(t);
            panels[p] += e.value * ww;
            prop += e.error * ww.abs();
        }
        (panels, prop)
    };
    let (ph, prop) = sum(&hi);
    let (pl, _) = sum(&lo);
    let total_h: C64 = ph.iter().sum();
    let total_l: C64 = pl.iter().sum();
    let mut est = Estimate { value: total_h, error: (total_h - total_l).norm() + prop, evaluations: ts.len() };
    if a == 0.0 {
        let (tail, terr) = geometric_tail(&ph)?;
        est.value += tail;
        est.error += terr;
    }
    Ok(est)
}

/// Tail `Σ_{n≥1} I_0 q^n` from panels listed innermost first.
fn geometric_tail(panels: &[C64]) -> Result<(C64, f64)> {
    let scale = panels.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if panels[0].norm() <= 1e-15 * scale || scale == 0.0 {
        return Ok((C64::new(0.0, 0.0), panels[0].norm()));
    }
    let q0 = panels[0] / panels[1];
    let q1 = panels[1] / panels[2];
    let q2 = panels[2] / panels[3];
    let spread = (q0 - q1).norm().max((q1 - q2).norm());
    if q0.norm() >= 0.98 || !q0.re.is_finite() || spread > 0.05 {
        return Err(LabError::TailDivergent(q0.norm()));
    }
    let tail = panels[0] * q0 / (1.0 - q0);
    let alt = panels[0] * q1 / (1.0 - q1);
    Ok((tail, (tail - alt).norm() + 1e-14 * scale))
}
