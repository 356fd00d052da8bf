//! Mass indicators along `V` and their extrapolation as `r → 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::currents::{euclidean_kahler, pair, pair_tube_radii, pushforward, Current, Region};
use crate::error::{LabError, Result};
use crate::forms::Form;
use crate::geometry::{binomial, BaseDomain, LocalSetting, Tube};
use crate::integrate::{Estimate, QuadratureSpec};
use crate::maps::AdmissibleMap;
use crate::C64;

/// `r_n = r0 · ratio^(−n)` for `n < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusSchedule {
    pub r0: f64,
    pub count: usize,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
}

fn default_ratio() -> f64 {
    2.0
}

impl RadiusSchedule {
    pub fn new(r0: f64, count: usize) -> Result<Self> {
        let s = Self { r0, count, ratio: 2.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn with_ratio(mut self, ratio: f64) -> Result<Self> {
        self.ratio = ratio;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(LabError::Invalid(format!("r0 = {} must be positive", self.r0)));
        }
        if !(self.ratio > 1.0) {
            return Err(LabError::Invalid(format!("ratio = {} must exceed 1", self.ratio)));
        }
        if self.count < 4 {
            return Err(LabError::InsufficientSamples { needed: 4, got: self.count });
        }
        Ok(())
    }

    /// Decreasing radii.
    pub fn radii(&self) -> Vec<f64> {
        (0..self.count).map(|n| self.r0 * self.ratio.powi(-(n as i32))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub r: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtrapolationMethod {
    LastValue,
    Richardson,
}

impl ExtrapolationMethod {
    pub fn name(self) -> &'static str {
        match self {
            ExtrapolationMethod::LastValue => "last-value",
            ExtrapolationMethod::Richardson => "richardson",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub limit: f64,
    pub error: f64,
    pub monotone: bool,
    pub method: ExtrapolationMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LelongEstimate {
    pub indicator: String,
    pub j: i64,
    pub q: Option<usize>,
    /// sorted by decreasing `r`
    pub samples: Vec<Sample>,
    pub limit: f64,
    pub error: f64,
    pub monotone: bool,
    pub method: ExtrapolationMethod,
}

impl LelongEstimate {
    fn build(indicator: &str, j: i64, q: Option<usize>, samples: Vec<Sample>, ratio: f64) -> Result<Self> {
        let x = extrapolate_with_ratio(&samples, ratio)?;
        Ok(Self {
            indicator: indicator.into(),
            j,
            q,
            samples,
            limit: x.limit,
            error: x.error,
            monotone: x.monotone,
            method: x.method,
        })
    }

    /// Nondecreasing in `r` within the sample error bars.
    pub fn nondecreasing_in_r(&self) -> bool {
        self.samples.windows(2).all(|w| w[0].value >= w[1].value - (w[0].error + w[1].error))
    }
}

/// Limit of a sequence sampled on a geometric schedule with ratio 2.
pub fn extrapolate(samples: &[Sample]) -> Result<Extrapolation> {
    extrapolate_with_ratio(samples, 2.0)
}

pub fn extrapolate_with_ratio(samples: &[Sample], ratio: f64) -> Result<Extrapolation> {
    let n = samples.len();
    if n < 4 {
        return Err(LabError::InsufficientSamples { needed: 4, got: n });
    }
    let v: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let e: Vec<f64> = samples.iter().map(|s| s.error).collect();
    let d: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let tol = |i: usize| e[i] + e[i + 1] + 1e-14 * (v[i].abs() + v[i + 1].abs());
    let up = (0..d.len()).all(|i| d[i] >= -tol(i));
    let down = (0..d.len()).all(|i| d[i] <= tol(i));
    let monotone = up || down;
    let floor = e[n - 1].max(e[n - 2]);

    let last3 = &d[d.len() - 3..];
    let same_sign = last3.iter().all(|x| *x > 0.0) || last3.iter().all(|x| *x < 0.0);
    let shrink = ratio.sqrt();
    let shrinking = last3.windows(2).all(|w| w[1].abs() * shrink <= w[0].abs());
    let significant = d[d.len() - 1].abs() > tol(n - 2);
    if same_sign && shrinking && significant {
        let rich = |k: usize| {
            // increments d[k-1], d[k] with k the index of the last one used
            let rho = d[k - 1] / d[k];
            (v[k + 1] + d[k] / (rho - 1.0), rho)
        };
        let (l1, rho) = rich(d.len() - 1);
        let (l0, _) = rich(d.len() - 2);
        let error = (l1 - l0).abs() + floor * rho / (rho - 1.0);
        return Ok(Extrapolation { limit: l1, error, monotone, method: ExtrapolationMethod::Richardson });
    }
    let last = d[d.len() - 1];
    let error = if last.abs() <= tol(n - 2) && d.iter().enumerate().all(|(i, x)| x.abs() <= tol(i)) {
        floor
    } else {
        last.abs() + floor
    };
    Ok(Extrapolation { limit: v[n - 1], error, monotone, method: ExtrapolationMethod::LastValue })
}

/// What the indicators need besides the current.
#[derive(Debug, Clone)]
pub struct IndicatorContext {
    pub setting: LocalSetting,
    pub base: BaseDomain,
    pub map: AdmissibleMap,
    pub quad: QuadratureSpec,
}

impl IndicatorContext {
    pub fn new(setting: LocalSetting, base: BaseDomain, quad: QuadratureSpec) -> Self {
        let map = AdmissibleMap::identity(setting.k, setting.l);
        Self { setting, base, map, quad }
    }

    pub fn with_map(mut self, map: AdmissibleMap) -> Self {
        self.map = map;
        self
    }

    fn current(&self, t: &Current) -> Result<Current> {
        if t.k() != self.setting.k || t.l() != self.setting.l {
            return Err(LabError::Invalid("current and setting disagree on (k, l)".into()));
        }
        pushforward(&self.map, t)
    }

    fn codegree(&self, t: &Current, j: i64) -> Option<(usize, usize)> {
        let k = self.setting.k as i64;
        let p = t.p() as i64;
        let n = k - p - j;
        if j < 0 || n < 0 {
            return None;
        }
        Some((j as usize, n as usize))
    }

    fn test_form(&self, j: usize, n: usize, fiber: &Form) -> Form {
        self.setting.omega().power(j).wedge(&fiber.power(n))
    }

    fn tube_values(&self, t: &Current, j: usize, fiber: &Form, n: usize, inner: f64, radii: &[f64]) -> Result<Vec<Estimate>> {
        let tt = self.current(t)?;
        let phi = self.test_form(j, n, fiber);
        pair_tube_radii(&tt, &self.setting, &self.base, inner, radii, &phi, &self.quad)
    }
}

/// `∫_{B(x,r)} T ∧ ω₀^(k−p) / (π r²)^(k−p)`, the trace-measure mass normalized by a flat plane's.
pub fn nu_point(t: &Current, x: &[C64], r: f64, quad: &QuadratureSpec) -> Result<Estimate> {
    let d = t.k() - t.p();
    let phi = euclidean_kahler(t.k()).power(d);
    let e = pair(t, &Region::Ball { center: x.to_vec(), radius: r }, &phi, quad)?;
    Ok(e.scale(1.0 / (PI * r * r).powi(d as i32)))
}

pub fn nu_point_schedule(t: &Current, x: &[C64], sched: &RadiusSchedule, quad: &QuadratureSpec) -> Result<LelongEstimate> {
    sched.validate()?;
    let samples = sched
        .radii()
        .into_iter()
        .map(|r| nu_point(t, x, r, quad).map(|e| sample(r, &e)))
        .collect::<Result<Vec<_>>>()?;
    LelongEstimate::build("nu_point", 0, None, samples, sched.ratio)
}

fn sample(r: f64, e: &Estimate) -> Sample {
    Sample { r, value: e.value.re, error: e.error }
}

/// Raw tube masses `∫_{Tube(B,r)} τ_*T ∧ ω^j ∧ β^(k−p−j)` at increasing `radii`, on shared nodes.
pub fn tube_masses(ctx: &IndicatorContext, t: &Current, j: i64, radii: &[f64]) -> Result<Vec<Estimate>> {
    match ctx.codegree(t, j) {
        None => Ok(vec![Estimate::zero(); radii.len()]),
        Some((j, n)) => ctx.tube_values(t, j, &ctx.setting.beta(), n, 0.0, radii),
    }
}

/// `ν_{j,q}(r) = r^(−2q) ∫_{Tube(B,r)} τ_*T ∧ ω^j ∧ β^(k−p−j)` for every `r` in `radii`.
pub fn nu_jq_radii(ctx: &IndicatorContext, t: &Current, j: i64, q: usize, radii: &[f64]) -> Result<Vec<Estimate>> {
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|a, b| radii[*a].total_cmp(&radii[*b]));
    let sorted: Vec<f64> = order.iter().map(|i| radii[*i]).collect();
    let raw = tube_masses(ctx, t, j, &sorted)?;
    let mut out = vec![Estimate::zero(); radii.len()];
    for (pos, i) in order.iter().enumerate() {
        out[*i] = raw[pos].scale(radii[*i].powi(-2 * q as i32));
    }
    Ok(out)
}

pub fn nu_jq(ctx: &IndicatorContext, t: &Current, j: i64, q: usize, r: f64) -> Result<Estimate> {
    Ok(nu_jq_radii(ctx, t, j, q, &[r])?[0])
}

fn nu_exponent(ctx: &IndicatorContext, t: &Current, j: i64) -> usize {
    (ctx.setting.k as i64 - t.p() as i64 - j).max(0) as usize
}

/// `ν_j(r) = r^(−2(k−p−j)) ∫_{Tube(B,r)} τ_*T ∧ ω^j ∧ β^(k−p−j)`.
pub fn nu_j(ctx: &IndicatorContext, t: &Current, j: i64, r: f64) -> Result<Estimate> {
    nu_jq(ctx, t, j, nu_exponent(ctx, t, j), r)
}

pub fn nu_j_schedule(ctx: &IndicatorContext, t: &Current, j: i64, sched: &RadiusSchedule) -> Result<LelongEstimate> {
    nu_jq_schedule_named(ctx, t, j, nu_exponent(ctx, t, j), sched, "nu_j", None)
}

pub fn nu_jq_schedule(ctx: &IndicatorContext, t: &Current, j: i64, q: usize, sched: &RadiusSchedule) -> Result<LelongEstimate> {
    nu_jq_schedule_named(ctx, t, j, q, sched, "nu_jq", Some(q))
}

fn nu_jq_schedule_named(
    ctx: &IndicatorContext,
    t: &Current,
    j: i64,
    q: usize,
    sched: &RadiusSchedule,
    name: &str,
    qtag: Option<usize>,
) -> Result<LelongEstimate> {
    sched.validate()?;
    let radii = sched.radii();
    let vals = nu_jq_radii(ctx, t, j, q, &radii)?;
    let samples = radii.iter().zip(&vals).map(|(r, e)| sample(*r, e)).collect();
    LelongEstimate::build(name, j, qtag, samples, sched.ratio)
}

/// `κ_j(s,r) = ∫_{Tube(B,s,r)} τ_*T ∧ ω^j ∧ α^(k−p−j)`.
pub fn kappa_corona(ctx: &IndicatorContext, t: &Current, j: i64, s: f64, r: f64) -> Result<Estimate> {
    if !(s > 0.0 && s <= r) {
        return Err(LabError::Precondition(format!("corona needs 0 < s <= r, got s={s}, r={r}")));
    }
    match ctx.codegree(t, j) {
        None => Ok(Estimate::zero()),
        Some((j, n)) => Ok(ctx.tube_values(t, j, &ctx.setting.alpha(), n, s, &[r])?[0]),
    }
}

/// `∫_{Tube(B,r)} τ_*T ∧ ω^j ∧ α_ε^(k−p−j)` for each `ε`.
pub fn kappa_eps(ctx: &IndicatorContext, t: &Current, j: i64, r: f64, eps: &[f64]) -> Result<Vec<(f64, Estimate)>> {
    if eps.iter().any(|e| !(*e > 0.0)) {
        return Err(LabError::Invalid("regularization scales must be positive".into()));
    }
    eps.iter()
        .map(|&e| {
            let v = match ctx.codegree(t, j) {
                None => Estimate::zero(),
                Some((jj, n)) => ctx.tube_values(t, jj, &ctx.setting.alpha_eps(e), n, 0.0, &[r])?[0],
            };
            Ok((e, v))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HatNu {
    pub direct: f64,
    pub direct_error: f64,
    pub binomial: f64,
    pub binomial_error: f64,
    pub residual: f64,
}

/// `ν̂_j(r)` with `(β + c₁r²ω)^(k−p−j)`, alongside `Σ_q C(k−p−j,q) c₁^q ν_{j+q}(r)`.
pub fn hat_nu(ctx: &IndicatorContext, t: &Current, j: i64, r: f64) -> Result<HatNu> {
    let Some((jj, n)) = ctx.codegree(t, j) else {
        return Ok(HatNu { direct: 0.0, direct_error: 0.0, binomial: 0.0, binomial_error: 0.0, residual: 0.0 });
    };
    let direct = ctx.tube_values(t, jj, &ctx.setting.hat_beta_at_radius(r), n, 0.0, &[r])?[0]
        .scale(r.powi(-2 * n as i32));
    let c1 = ctx.setting.c1;
    let mut acc = Estimate::zero();
    for q in 0..=n {
        let nu = nu_j(ctx, t, j + q as i64, r)?;
        acc = acc.add(&nu.scale(binomial(n, q) * c1.powi(q as i32)));
    }
    Ok(HatNu {
        direct: direct.value.re,
        direct_error: direct.error,
        binomial: acc.value.re,
        binomial_error: acc.error,
        residual: (direct.value - acc.value).norm(),
    })
}

/// Top index `min(l, k−p)`.
pub fn top_index(setting: &LocalSetting) -> i64 {
    setting.m_high() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicRow {
    pub j: i64,
    pub first: LelongEstimate,
    pub second: LelongEstimate,
    pub difference: f64,
    pub combined_error: f64,
}

/// `ν_j` limits under two admissible maps.
pub fn intrinsic_check(
    t: &Current,
    setting: &LocalSetting,
    base: &BaseDomain,
    maps: (&AdmissibleMap, &AdmissibleMap),
    js: &[i64],
    sched: &RadiusSchedule,
    quad: &QuadratureSpec,
) -> Result<Vec<IntrinsicRow>> {
    let c1 = IndicatorContext::new(setting.clone(), base.clone(), *quad).with_map(maps.0.clone());
    let c2 = IndicatorContext::new(setting.clone(), base.clone(), *quad).with_map(maps.1.clone());
    js.iter()
        .map(|&j| {
            let first = nu_j_schedule(&c1, t, j, sched)?;
            let second = nu_j_schedule(&c2, t, j, sched)?;
            Ok(IntrinsicRow {
                j,
                difference: (first.limit - second.limit).abs(),
                combined_error: first.error + second.error,
                first,
                second,
            })
        })
        .collect()
}

/// `Tube(B, r)` as a pairing region for this context.
pub fn tube_region(ctx: &IndicatorContext, r: f64) -> Region {
    Region::Tube { setting: ctx.setting.clone(), tube: Tube::solid(ctx.base.clone(), r) }
}
