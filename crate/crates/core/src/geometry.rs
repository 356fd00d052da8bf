//! The local model: `C^(k−l) × C^l` with a fiber metric `A(w)`, tubes over base domains and
//! the canonical forms built from `φ = ‖A(w) z‖²`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::forms::{
    dy, dybar, ChartPoint, Field, Form, FormValue, Jet, JetField, Polynomial, ScalarField, SingularLocus,
    TangentVector,
};
use crate::C64;

/// Fiber metric `w ↦ A(w)`, entries polynomial in `(w, w̄)` (stored on the full chart).
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Identity,
    Constant(Vec<Vec<C64>>),
    Matrix(Vec<Vec<Polynomial>>),
}

impl Metric {
    /// `diag(1 + |w_1|², 1, …, 1)`, the standard non-constant example.
    pub fn bump_first(k: usize, l: usize) -> Self {
        let m = k - l;
        let mut rows = vec![vec![Polynomial::zero(k); m]; m];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = Polynomial::constant(k, C64::new(1.0, 0.0));
        }
        rows[0][0] = rows[0][0].add(&Polynomial::var(k, m).mul(&Polynomial::var_bar(k, m)));
        Metric::Matrix(rows)
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Metric::Identity | Metric::Constant(_) => true,
            Metric::Matrix(rows) => rows.iter().flatten().all(|p| p.degree() == 0),
        }
    }
}

/// Base Kähler form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaSpec {
    /// `ddᶜ‖w‖²`
    Standard,
    /// `(i/π) Σ c_i dw_i ∧ dw̄_i`, `c_i > 0`
    Weighted { weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum BaseDomain {
    Ball { center: Vec<C64>, radius: f64 },
    Polydisc { center: Vec<C64>, radii: Vec<f64> },
    /// The base of a point (`l = 0`).
    Point,
}

impl BaseDomain {
    pub fn unit_disc() -> Self {
        BaseDomain::Ball { center: vec![C64::new(0.0, 0.0)], radius: 1.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseDomain::Ball { center, .. } | BaseDomain::Polydisc { center, .. } => center.len(),
            BaseDomain::Point => 0,
        }
    }

    pub fn validate(&self, l: usize) -> Result<()> {
        if self.dim() != l {
            return Err(LabError::Invalid(format!("base domain of dimension {} for l = {l}", self.dim())));
        }
        match self {
            BaseDomain::Ball { radius, .. } if !(*radius > 0.0) => Err(LabError::Invalid("ball radius must be > 0".into())),
            BaseDomain::Polydisc { radii, center } if radii.len() != center.len() || radii.iter().any(|r| !(*r > 0.0)) => {
                Err(LabError::Invalid("polydisc radii must be positive, one per coordinate".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, w: &[C64]) -> bool {
        match self {
            BaseDomain::Ball { center, radius } => {
                w.iter().zip(center).map(|(a, c)| (a - c).norm_sqr()).sum::<f64>() < radius * radius
            }
            BaseDomain::Polydisc { center, radii } => w.iter().zip(center).zip(radii).all(|((a, c), r)| (a - c).norm() < *r),
            BaseDomain::Point => true,
        }
    }

    /// Lebesgue volume.
    pub fn volume(&self) -> f64 {
        match self {
            BaseDomain::Ball { center, radius } => {
                let l = center.len();
                PI.powi(l as i32) * radius.powi(2 * l as i32) / factorial(l)
            }
            BaseDomain::Polydisc { radii, .. } => radii.iter().map(|r| PI * r * r).product(),
            BaseDomain::Point => 1.0,
        }
    }

    /// `∫_B (ddᶜ‖w‖²)^l = l! (2/π)^l vol(B)`.
    pub fn omega_mass(&self) -> f64 {
        let l = self.dim();
        factorial(l) * (2.0 / PI).powi(l as i32) * self.volume()
    }

    /// Boundary points with outward unit normals, `n` per boundary piece, deterministic.
    pub fn boundary_samples(&self, n: usize, seed: u64) -> Vec<(Vec<C64>, Vec<C64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        match self {
            BaseDomain::Ball { center, radius } => {
                for _ in 0..n {
                    let d = random_unit(&mut rng, center.len());
                    out.push((center.iter().zip(&d).map(|(c, v)| c + v * radius).collect(), d));
                }
            }
            BaseDomain::Polydisc { center, radii } => {
                for face in 0..center.len() {
                    for _ in 0..n {
                        let mut w = Vec::new();
                        let mut nrm = vec![C64::new(0.0, 0.0); center.len()];
                        for i in 0..center.len() {
                            let th = 2.0 * PI * rng.gen::<f64>();
                            let e = C64::from_polar(1.0, th);
                            if i == face {
                                w.push(center[i] + e * radii[i]);
                                nrm[i] = e;
                            } else {
                                w.push(center[i] + e * radii[i] * rng.gen::<f64>().sqrt());
                            }
                        }
                        out.push((w, nrm));
                    }
                }
            }
            BaseDomain::Point => {}
        }
        out
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        0.0
    } else {
        factorial(n) / (factorial(k) * factorial(n - k))
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
    let s = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|c| c / s).collect()
}

/// `Tube(B, s, r) = {w ∈ B, s < ‖A(w) z‖ < r}`; `s = 0` is the solid tube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub base: BaseDomain,
    pub inner: f64,
    pub outer: f64,
}

impl Tube {
    pub fn solid(base: BaseDomain, r: f64) -> Self {
        Self { base, inner: 0.0, outer: r }
    }

    pub fn corona(base: BaseDomain, s: f64, r: f64) -> Self {
        Self { base, inner: s, outer: r }
    }

    pub fn is_solid(&self) -> bool {
        self.inner == 0.0
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self { base: self.base.clone(), inner: self.inner * f, outer: self.outer * f }
    }
}

#[derive(Debug, Clone)]
pub struct LocalSetting {
    pub k: usize,
    pub l: usize,
    pub p: usize,
    pub metric: Metric,
    pub omega: OmegaSpec,
    pub c1: f64,
    pub c2: f64,
    pub rbar: f64,
}

/// Condition-number bound for `A(w)` on the sweep grid.
pub const CONDITION_BOUND: f64 = 1e8;

struct PhiField {
    setting: Arc<LocalSetting>,
}

impl ScalarField for PhiField {
    fn dim(&self) -> usize {
        self.setting.k
    }
    fn value(&self, y: &[C64]) -> C64 {
        C64::new(self.setting.phi(y), 0.0)
    }
    fn jet(&self, y: &[C64]) -> Option<Jet> {
        Some(self.setting.phi_jet(y))
    }
}

struct LogPhiField {
    setting: Arc<LocalSetting>,
    eps2: f64,
}

impl ScalarField for LogPhiField {
    fn dim(&self) -> usize {
        self.setting.k
    }
    fn value(&self, y: &[C64]) -> C64 {
        C64::new((self.setting.phi(y) + self.eps2).ln(), 0.0)
    }
    fn jet(&self, y: &[C64]) -> Option<Jet> {
        Some(self.setting.phi_jet(y).add_const(C64::new(self.eps2, 0.0)).ln())
    }
}

impl LocalSetting {
    /// Build the setting and fix `c1`, `c2` by a positivity sweep over the working tube of
    /// radius `rbar` above the polydisc `|w_i| ≤ 1`.
    pub fn build(k: usize, l: usize, p: usize, metric: Metric, omega: OmegaSpec, rbar: f64) -> Result<Self> {
        if l >= k || p > k || k > crate::forms::MAX_DIM {
            return Err(LabError::Invalid(format!("need 0 <= l < k <= {}, p <= k; got k={k}, l={l}, p={p}", crate::forms::MAX_DIM)));
        }
        if !(rbar > 0.0) {
            return Err(LabError::Invalid("working tube radius must be positive".into()));
        }
        let m = k - l;
        match &metric {
            Metric::Constant(a) if a.len() != m || a.iter().any(|r| r.len() != m) => {
                return Err(LabError::Invalid(format!("constant metric must be {m}x{m}")))
            }
            Metric::Matrix(a) => {
                if a.len() != m || a.iter().any(|r| r.len() != m) {
                    return Err(LabError::Invalid(format!("metric must be {m}x{m}")));
                }
                let zmask = (1u32 << m) - 1;
                if a.iter().flatten().any(|q| !q.independent_of(zmask) || q.n > k) {
                    return Err(LabError::Invalid("metric entries may depend on w only".into()));
                }
            }
            _ => {}
        }
        if let OmegaSpec::Weighted { weights } = &omega {
            if weights.len() != l || weights.iter().any(|c| !(*c > 0.0)) {
                return Err(LabError::Invalid("omega weights must be positive, one per base coordinate".into()));
            }
        }
        let mut s = Self { k, l, p, metric, omega, c1: 1.0, c2: 1.0, rbar };
        if let Metric::Matrix(rows) = &mut s.metric {
            rows.iter_mut().flatten().for_each(|q| q.n = k);
        }
        let pts = s.sweep_points(400, 0xc1);
        for y in &pts {
            let a = s.metric_matrix(&y[m..]);
            let sv = DMatrix::from_row_slice(m, m, &a).singular_values();
            let (mx, mn) = (sv.max(), sv.min());
            if !(mn > 0.0) || mx / mn > CONDITION_BOUND {
                return Err(LabError::MetricDegenerate(format!("cond(A) = {:e} at w = {:?}", mx / mn, &y[m..])));
            }
        }
        s.c1 = s.search_constant(&pts, |st, y| st.hat_beta_margin(y) && st.hat_alpha_prime_margin(y))?;
        s.c2 = s.search_constant_c2(&pts)?;
        Ok(s)
    }

    pub fn standard(k: usize, l: usize, p: usize) -> Self {
        Self::build(k, l, p, Metric::Identity, OmegaSpec::Standard, 1.0).expect("standard setting")
    }

    pub fn m(&self) -> usize {
        self.k - self.l
    }

    /// `m̲ = max(0, l − p)`
    pub fn m_low(&self) -> usize {
        self.l.saturating_sub(self.p)
    }

    /// `m̄ = min(l, k − p)`
    pub fn m_high(&self) -> usize {
        self.l.min(self.k - self.p)
    }

    fn sweep_points(&self, n: usize, seed: u64) -> Vec<Vec<C64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.m();
        (0..n)
            .map(|_| {
                let w: Vec<C64> = (0..self.l)
                    .map(|_| C64::from_polar(rng.gen::<f64>().sqrt(), 2.0 * PI * rng.gen::<f64>()))
                    .collect();
                let d = random_unit(&mut rng, m);
                let mut y = d.clone();
                y.extend_from_slice(&w);
                // scale so that the metric norm is a fraction of rbar
                let a = self.metric_matrix(&w);
                let nz = apply_mat(&a, m, &d).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                let t = self.rbar * (0.02 + 0.97 * rng.gen::<f64>()) / nz;
                for c in y.iter_mut().take(m) {
                    *c *= t;
                }
                y
            })
            .collect()
    }

    fn search_constant(&mut self, pts: &[Vec<C64>], ok: impl Fn(&Self, &[C64]) -> bool) -> Result<f64> {
        for e in 0..40 {
            self.c1 = 2f64.powi(e);
            if pts.iter().all(|y| ok(self, y)) {
                return Ok(self.c1);
            }
        }
        Err(LabError::MetricDegenerate("no c1 <= 2^39 passes the positivity sweep".into()))
    }

    fn search_constant_c2(&mut self, pts: &[Vec<C64>]) -> Result<f64> {
        for e in 0..40 {
            self.c2 = 2f64.powi(e);
            if pts.iter().all(|y| min_eig(&self.levi(&self.hat_alpha().eval(y))) >= 1e-6) {
                return Ok(self.c2);
            }
        }
        Err(LabError::MetricDegenerate("no c2 <= 2^39 makes the modified alpha form positive".into()))
    }

    fn hat_beta_margin(&self, y: &[C64]) -> bool {
        let phi = self.phi(y);
        min_eig(&self.levi(&self.hat_beta().eval(y))) >= 1e-6 * phi
    }

    fn hat_alpha_prime_margin(&self, y: &[C64]) -> bool {
        let v = &self.hat_alpha_prime().eval(y) - &self.alpha_ver().eval(y).scale(C64::new(1.0 / self.c1, 0.0));
        let scale = self.levi(&self.alpha().eval(y)).iter().map(|c| c.norm()).fold(1.0, f64::max);
        min_eig(&self.levi(&v)) >= -1e-12 * scale
    }

    /// Hermitian matrix `H` of a real (1,1)-form `(i/π) Σ H_ab dy_a ∧ dȳ_b`.
    pub fn levi(&self, v: &FormValue) -> Vec<C64> {
        let k = self.k;
        let mut h = vec![C64::new(0.0, 0.0); k * k];
        let c = C64::new(0.0, -PI); // 1 / (i/π)
        for a in 0..k {
            for b in 0..k {
                h[a * k + b] = v.get(dy(a) | dybar(b)) * c;
            }
        }
        h
    }

    pub fn metric_matrix(&self, w: &[C64]) -> Vec<C64> {
        let m = self.m();
        match &self.metric {
            Metric::Identity => {
                let mut a = vec![C64::new(0.0, 0.0); m * m];
                for i in 0..m {
                    a[i * m + i] = C64::new(1.0, 0.0);
                }
                a
            }
            Metric::Constant(rows) => rows.iter().flatten().copied().collect(),
            Metric::Matrix(rows) => {
                let mut y = vec![C64::new(0.0, 0.0); m];
                y.extend_from_slice(w);
                rows.iter().flatten().map(|p| p.eval(&y)).collect()
            }
        }
    }

    /// `A(w) z` at the chart point `y = (z, w)`.
    pub fn metric_image(&self, y: &[C64]) -> Vec<C64> {
        let m = self.m();
        match &self.metric {
            Metric::Identity => y[..m].to_vec(),
            _ => apply_mat(&self.metric_matrix(&y[m..]), m, &y[..m]),
        }
    }

    pub fn phi(&self, y: &[C64]) -> f64 {
        self.metric_image(y).iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn phi_jet(&self, y: &[C64]) -> Jet {
        let k = self.k;
        let m = self.m();
        let one = C64::new(1.0, 0.0);
        match &self.metric {
            Metric::Identity => {
                let mut j = Jet::constant(k, C64::new(0.0, 0.0));
                for i in 0..m {
                    j.v += y[i].norm_sqr();
                    j.d[i] = y[i].conj();
                    j.db[i] = y[i];
                    j.h[i][i] = one;
                }
                j
            }
            Metric::Constant(rows) => {
                let mut j = Jet::constant(k, C64::new(0.0, 0.0));
                for row in rows {
                    let u: C64 = row.iter().zip(y).map(|(a, z)| a * z).sum();
                    j.v += u.norm_sqr();
                    for i in 0..m {
                        j.d[i] += row[i] * u.conj();
                        j.db[i] += row[i].conj() * u;
                        for b in 0..m {
                            j.h[i][b] += row[i] * row[b].conj();
                        }
                    }
                }
                j
            }
            Metric::Matrix(rows) => {
                let mut phi = Jet::constant(k, C64::new(0.0, 0.0));
                for row in rows {
                    let mut u = Jet::constant(k, C64::new(0.0, 0.0));
                    for (b, p) in row.iter().enumerate() {
                        if !p.is_zero() {
                            u = u.add(&p.jet(y).mul(&Jet::var(k, b, y)));
                        }
                    }
                    phi = phi.add(&u.mul(&u.conj()));
                }
                phi
            }
        }
    }

    pub fn tube_membership(&self, tube: &Tube, at: &ChartPoint) -> bool {
        if !tube.base.contains(&at.w) {
            return false;
        }
        let r = self.phi(&at.coords()).sqrt();
        r > tube.inner && r < tube.outer || (tube.inner == 0.0 && r == 0.0 && tube.outer > 0.0)
    }

    fn all_bits(&self) -> u32 {
        (1 << self.k) - 1
    }

    fn fiber_bits(&self) -> u32 {
        (1 << self.m()) - 1
    }

    fn arc(&self) -> Arc<LocalSetting> {
        Arc::new(self.clone())
    }

    /// `φ` as a scalar field with analytic jets.
    pub fn phi_field(&self) -> Field {
        Arc::new(PhiField { setting: self.arc() })
    }

    pub fn log_phi_field(&self, eps: f64) -> Field {
        Arc::new(LogPhiField { setting: self.arc(), eps2: eps * eps })
    }

    /// `α = ddᶜ log φ`
    pub fn alpha(&self) -> Form {
        Form::ddc_of_potential(self.k, self.log_phi_field(0.0), self.all_bits(), self.all_bits())
            .with_singular(SingularLocus::FiberOrigin { fiber_dim: self.m() })
    }

    /// `β = ddᶜ φ`
    pub fn beta(&self) -> Form {
        Form::ddc_of_potential(self.k, self.phi_field(), self.all_bits(), self.all_bits())
    }

    /// `α_ε = ddᶜ log(φ + ε²)`
    pub fn alpha_eps(&self, eps: f64) -> Form {
        Form::ddc_of_potential(self.k, self.log_phi_field(eps), self.all_bits(), self.all_bits())
    }

    /// Fiberwise `ddᶜ log φ`.
    pub fn alpha_ver(&self) -> Form {
        Form::ddc_of_potential(self.k, self.log_phi_field(0.0), self.fiber_bits(), self.fiber_bits())
            .with_singular(SingularLocus::FiberOrigin { fiber_dim: self.m() })
    }

    /// Fiberwise `ddᶜ φ`.
    pub fn beta_ver(&self) -> Form {
        Form::ddc_of_potential(self.k, self.phi_field(), self.fiber_bits(), self.fiber_bits())
    }

    /// `π*ω` on the chart.
    pub fn omega(&self) -> Form {
        let m = self.m();
        let terms = (0..self.l)
            .map(|i| {
                let c = match &self.omega {
                    OmegaSpec::Standard => 1.0,
                    OmegaSpec::Weighted { weights } => weights[i],
                };
                (dy(m + i) | dybar(m + i), C64::new(0.0, c / PI))
            })
            .collect();
        if self.l == 0 {
            return Form::zero(self.k, (1, 1));
        }
        Form::constant(self.k, FormValue::from_terms(terms)).unwrap()
    }

    /// `c1 π*ω + α`
    pub fn hat_alpha_prime(&self) -> Form {
        if self.l == 0 {
            return self.alpha();
        }
        self.omega().scale(C64::new(self.c1, 0.0)).add(&self.alpha()).unwrap()
    }

    /// `c1 φ π*ω + β`
    pub fn hat_beta(&self) -> Form {
        if self.l == 0 {
            return self.beta();
        }
        self.omega().mul_field(self.phi_field()).scale(C64::new(self.c1, 0.0)).add(&self.beta()).unwrap()
    }

    /// `α̂′ + c2 β`
    pub fn hat_alpha(&self) -> Form {
        self.hat_alpha_prime().add(&self.beta().scale(C64::new(self.c2, 0.0))).unwrap()
    }

    /// `β + c1 r² π*ω`, the form defining the modified indicator `ν̂_j`.
    pub fn hat_beta_at_radius(&self, r: f64) -> Form {
        if self.l == 0 {
            return self.beta();
        }
        self.omega().scale(C64::new(self.c1 * r * r, 0.0)).add(&self.beta()).unwrap()
    }

    /// Real gradient of `φ` as a complex vector `G` with `dφ(v) = Re⟨G, v⟩`.
    pub fn phi_gradient(&self, y: &[C64]) -> Vec<C64> {
        let j = self.phi_jet(y);
        (0..self.k).map(|i| j.d[i].conj() * 2.0).collect()
    }

    /// Max of `|α(v₁,v₂) − t⁻² β(v₁,v₂)|` over real frames tangent to `{φ = t²}`.
    pub fn horizontal_restriction_check(&self, t: f64, samples: &[(Vec<C64>, [Vec<C64>; 2])]) -> Result<f64> {
        let alpha = self.alpha();
        let beta = self.beta();
        let mut worst: f64 = 0.0;
        for (y, frame) in samples {
            let phi = self.phi(y);
            if (phi - t * t).abs() > 1e-10 * t * t.max(1.0) {
                return Err(LabError::Precondition(format!("sample off the level set: phi = {phi}, t^2 = {}", t * t)));
            }
            let g = self.phi_gradient(y);
            let gn = g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            for v in frame.iter() {
                let dphi: f64 = g.iter().zip(v).map(|(a, b)| (a.conj() * b).re).sum();
                let vn = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                if dphi.abs() > 1e-8 * gn * vn {
                    return Err(LabError::FrameNotTangent(dphi.abs()));
                }
            }
            let fr = [TangentVector::real(&frame[0]), TangentVector::real(&frame[1])];
            let a = alpha.evaluate_on_tangent_frame(y, &fr)?;
            let b = beta.evaluate_on_tangent_frame(y, &fr)?;
            worst = worst.max((a - b / (t * t)).norm());
        }
        Ok(worst)
    }

    /// Random points of `∂_hor Tube(B, t)` with random real frame pairs tangent to it.
    pub fn level_set_frames(&self, t: f64, base: &BaseDomain, n: usize, seed: u64) -> Vec<(Vec<C64>, [Vec<C64>; 2])> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.m();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let w: Vec<C64> = match base {
                BaseDomain::Point => vec![],
                _ => {
                    let cand: Vec<C64> = (0..self.l).map(|_| C64::new(2.0 * rng.gen::<f64>() - 1.0, 2.0 * rng.gen::<f64>() - 1.0)).collect();
                    let shifted: Vec<C64> = match base {
                        BaseDomain::Ball { center, radius } => cand.iter().zip(center).map(|(c, o)| o + c * radius).collect(),
                        BaseDomain::Polydisc { center, radii } => {
                            cand.iter().zip(center).zip(radii).map(|((c, o), r)| o + c * *r).collect()
                        }
                        BaseDomain::Point => vec![],
                    };
                    if !base.contains(&shifted) {
                        continue;
                    }
                    shifted
                }
            };
            let d = random_unit(&mut rng, m);
            let mut y = d;
            y.extend_from_slice(&w);
            let s = t / self.phi(&y).sqrt();
            for c in y.iter_mut().take(m) {
                *c *= s;
            }
            let g = self.phi_gradient(&y);
            let gg: f64 = g.iter().map(|c| c.norm_sqr()).sum();
            let mut tangent = || {
                let v: Vec<C64> = (0..self.k).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
                let proj: f64 = g.iter().zip(&v).map(|(a, b)| (a.conj() * b).re).sum::<f64>() / gg;
                v.iter().zip(&g).map(|(a, b)| a - b * proj).collect::<Vec<C64>>()
            };
            let v1 = tangent();
            let v2 = tangent();
            out.push((y, [v1, v2]));
        }
        out
    }

    /// The record embedded in every report.
    pub fn record(&self) -> SettingRecord {
        SettingRecord {
            k: self.k,
            l: self.l,
            p: self.p,
            metric: match &self.metric {
                Metric::Identity => "identity".into(),
                Metric::Constant(_) => "constant".into(),
                Metric::Matrix(_) => "matrix".into(),
            },
            omega: self.omega.clone(),
            c1: self.c1,
            c2: self.c2,
            rbar: self.rbar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRecord {
    pub k: usize,
    pub l: usize,
    pub p: usize,
    pub metric: String,
    pub omega: OmegaSpec,
    pub c1: f64,
    pub c2: f64,
    pub rbar: f64,
}

pub fn apply_mat(a: &[C64], m: usize, z: &[C64]) -> Vec<C64> {
    (0..m).map(|i| (0..m).map(|j| a[i * m + j] * z[j]).sum()).collect()
}

/// Smallest eigenvalue of a Hermitian matrix (Hermitian part taken first).
pub fn min_eig(h: &[C64]) -> f64 {
    let n = (h.len() as f64).sqrt() as usize;
    let mut m = DMatrix::<C64>::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            m[(a, b)] = (h[a * n + b] + h[b * n + a].conj()) * 0.5;
        }
    }
    m.symmetric_eigenvalues().min()
}

/// Make a scalar field from a closure on jets.
pub fn jet_field(k: usize, f: impl Fn(&[C64]) -> Jet + Send + Sync + 'static) -> Field {
    Arc::new(JetField::new(k, f))
}
