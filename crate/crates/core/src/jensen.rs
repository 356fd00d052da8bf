//! Lelong–Jensen identities for tubes, checked term by term on smooth forms.
//!
//! With `M(r) = ∫_{Tube(B,r)} S∧β^q` and `G(t) = ∫_{Tube(B,t)} ddᶜS∧β^(q−1)`:
//!
//! ```text
//! M(r₂)/r₂^{2q} − M(r₁)/r₁^{2q} = 𝒱 + ∫_{Tube(B,r₁,r₂)} S∧α^q
//!     + ∫_{r₁}^{r₂} (t^{−2q} − r₂^{−2q}) 2t G(t) dt
//!     + (r₁^{−2q} − r₂^{−2q}) ∫_0^{r₁} 2t G(t) dt
//! ```
//!
//! The vertical boundary term `𝒱` is never integrated. It vanishes identically when every
//! component of `S` carries all of `dw, dw̄`, and otherwise it is what the residual measures.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::forms::{dy, dybar, DiffOp, Form, Polynomial};
use crate::geometry::{BaseDomain, LocalSetting};
use crate::integrate::{integrate_radial_profile, integrate_tube_radii, Estimate, ProfileSpec, QuadratureSpec};
use crate::lelong::{extrapolate, Extrapolation, Sample};
use crate::maps::loglog_slope;
use crate::C64;

#[derive(Debug, Clone)]
pub struct JensenContext {
    pub setting: LocalSetting,
    pub base: BaseDomain,
    pub quad: QuadratureSpec,
    pub profile: ProfileSpec,
    /// radii are multiplied by a seeded factor in (0.99, 1.01) when set
    pub jitter_seed: Option<u64>,
}

impl JensenContext {
    pub fn new(setting: LocalSetting, base: BaseDomain, quad: QuadratureSpec) -> Self {
        Self { setting, base, quad, profile: ProfileSpec { panels: 8, nodes: 5 }, jitter_seed: None }
    }

    pub fn with_profile(mut self, profile: ProfileSpec) -> Self {
        self.profile = profile;
        self
    }

    pub fn with_jitter(mut self, seed: u64) -> Self {
        self.jitter_seed = Some(seed);
        self
    }

    fn jitter(&self, r: f64, slot: u64) -> f64 {
        match self.jitter_seed {
            Some(seed) => r * jitter_factor(seed, slot),
            None => r,
        }
    }
}

/// A factor in (0.99, 1.01) drawn from stream `slot` of `seed`.
pub fn jitter_factor(seed: u64, slot: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot);
    1.0 + 0.01 * (2.0 * rng.gen::<f64>() - 1.0) * (1.0 - 1e-9)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub value: f64,
    pub error: f64,
}

impl Term {
    pub fn zero() -> Self {
        Self { value: 0.0, error: 0.0 }
    }

    fn from(e: &Estimate) -> Self {
        Self { value: e.value.re, error: e.error }
    }

    fn scale(self, c: f64) -> Self {
        Self { value: self.value * c, error: self.error * c.abs() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JensenVariant {
    Corona,
    SmoothOrigin,
    Eps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Vertical {
    /// every component of `S` has full `dw` bidegree, so `𝒱 ≡ 0`
    VanishesByBidegree,
    /// `𝒱` is left inside the residual
    NotIntegrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JensenReport {
    pub variant: JensenVariant,
    pub q: usize,
    /// requested `(r₁, r₂)`; `r₁` is 0 for the smooth-origin and ε versions
    pub radii_requested: (f64, f64),
    pub radii_used: (f64, f64),
    pub eps: Option<f64>,
    pub jitter_seed: Option<u64>,
    /// normalized masses at the inner and outer radius (the inner one is a limit for smooth-origin)
    pub mass_inner: Term,
    pub mass_outer: Term,
    pub small_radius_limit: Option<Extrapolation>,
    pub lhs_mass_difference: Term,
    pub corona_alpha_integral: Term,
    pub ddc_double_integral_1: Term,
    pub ddc_double_integral_2: Term,
    pub vertical_term: Term,
    pub vertical: Vertical,
    /// `ddᶜS` vanished at every probe point
    pub closed: bool,
    pub residual: f64,
    pub residual_error: f64,
    pub seed: u64,
}

impl JensenReport {
    pub fn vertical_term_skipped(&self) -> bool {
        self.vertical == Vertical::VanishesByBidegree
    }

    fn terms(&self) -> [Term; 5] {
        [
            self.lhs_mass_difference,
            self.corona_alpha_integral,
            self.ddc_double_integral_1,
            self.ddc_double_integral_2,
            self.vertical_term,
        ]
    }

    pub fn max_term(&self) -> f64 {
        self.terms()
            .iter()
            .chain([&self.mass_inner, &self.mass_outer])
            .map(|t| t.value.abs())
            .fold(0.0, f64::max)
    }

    /// `|residual| ≤ tol · max |term|`.
    pub fn passes(&self, tol: f64) -> bool {
        self.residual.abs() <= tol * self.max_term()
    }

    fn finish(mut self) -> Self {
        let rhs = self.corona_alpha_integral.value
            + self.ddc_double_integral_1.value
            + self.ddc_double_integral_2.value
            + self.vertical_term.value;
        self.residual = self.lhs_mass_difference.value - rhs;
        self.residual_error = self.terms().iter().map(|t| t.error).sum();
        self
    }
}

/// Bidimension `q` of a form of degree `2(k−q)`.
fn dimension_of(k: usize, s: &Form) -> Result<usize> {
    if s.k() != k {
        return Err(LabError::Invalid(format!("form lives on C^{} but the setting is C^{k}", s.k())));
    }
    let d = s.degree();
    if d % 2 == 1 || d > 2 * k {
        return Err(LabError::Invalid(format!("form of degree {d} has no even dimension in C^{k}")));
    }
    let q = k - d / 2;
    if q == 0 {
        return Err(LabError::Invalid("a top-degree form has dimension 0; the identities need q >= 1".into()));
    }
    Ok(q)
}

/// Deterministic probe points spread over a tube of radius `r`.
fn probe_points(setting: &LocalSetting, base: &BaseDomain, r: f64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a65_6e73);
    let (m, l) = (setting.m(), setting.l);
    let (center, rad) = match base {
        BaseDomain::Point => (vec![], 0.0),
        BaseDomain::Ball { center, radius } => (center.clone(), *radius),
        BaseDomain::Polydisc { center, radii } => (center.clone(), radii.iter().cloned().fold(f64::INFINITY, f64::min)),
    };
    (0..12)
        .map(|_| {
            let mut y: Vec<C64> = (0..m).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (0.5 * r)).collect();
            y.extend((0..l).map(|i| center[i] + C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (0.5 * rad)));
            y
        })
        .collect()
}

/// Every nonzero component carries `dw_i ∧ dw̄_i` for all base directions, at the probe points.
pub fn has_full_base_bidegree(setting: &LocalSetting, s: &Form, base: &BaseDomain, r: f64) -> bool {
    if setting.l == 0 || matches!(base, BaseDomain::Point) {
        return true;
    }
    let m = setting.m();
    let need = (0..setting.l).fold(0, |acc, i| acc | dy(m + i) | dybar(m + i));
    probe_points(setting, base, r).iter().all(|y| {
        let v = s.eval(y);
        let scale = v.max_abs();
        v.terms().iter().all(|(mask, c)| c.norm() <= 1e-14 * scale || mask & need == need)
    })
}

fn vanishes_at_probes(setting: &LocalSetting, f: &Form, base: &BaseDomain, r: f64) -> bool {
    if f.is_trivially_zero() {
        return true;
    }
    probe_points(setting, base, r).iter().all(|y| f.eval(y).max_abs() == 0.0)
}

struct Pieces {
    q: usize,
    mass: Form,
    alpha: Form,
    ddc: Form,
    closed: bool,
    vertical: Vertical,
}

fn pieces(ctx: &JensenContext, s: &Form, alpha: Form, r: f64) -> Result<Pieces> {
    let k = ctx.setting.k;
    let q = dimension_of(k, s)?;
    let beta = ctx.setting.beta();
    let ddc_s = s.derivative(DiffOp::Ddc);
    let closed = vanishes_at_probes(&ctx.setting, &ddc_s, &ctx.base, r);
    let vertical = if has_full_base_bidegree(&ctx.setting, s, &ctx.base, r) {
        Vertical::VanishesByBidegree
    } else {
        Vertical::NotIntegrated
    };
    Ok(Pieces {
        q,
        mass: s.wedge(&beta.power(q)),
        alpha: s.wedge(&alpha.power(q)),
        ddc: ddc_s.wedge(&beta.power(q - 1)),
        closed,
        vertical,
    })
}

fn density(f: &Form, k: usize) -> impl Fn(&[C64]) -> Result<C64> + Sync + '_ {
    move |y: &[C64]| Ok(f.eval(y).lebesgue_density(k))
}

fn tube_values(ctx: &JensenContext, f: &Form, inner: f64, radii: &[f64], weight: f64) -> Result<Vec<Estimate>> {
    let k = ctx.setting.k;
    let quad = ctx.quad.with_singular_weight(weight.min(2.0 * ctx.setting.m() as f64 - 1.0));
    integrate_tube_radii(&ctx.setting, &density(f, k), &ctx.base, inner, radii, &quad)
}

/// `∫_a^b w(t) G(t) dt` through the radial profile integrator.
fn profile(ctx: &JensenContext, ddc: &Form, weight: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<Term> {
    if b <= a {
        return Ok(Term::zero());
    }
    let g = |ts: &[f64]| tube_values(ctx, ddc, 0.0, ts, 0.0);
    Ok(Term::from(&integrate_radial_profile(&g, weight, a, b, &ctx.profile)?))
}

fn blank(variant: JensenVariant, q: usize, requested: (f64, f64), used: (f64, f64), ctx: &JensenContext, p: &Pieces) -> JensenReport {
    JensenReport {
        variant,
        q,
        radii_requested: requested,
        radii_used: used,
        eps: None,
        jitter_seed: ctx.jitter_seed,
        mass_inner: Term::zero(),
        mass_outer: Term::zero(),
        small_radius_limit: None,
        lhs_mass_difference: Term::zero(),
        corona_alpha_integral: Term::zero(),
        ddc_double_integral_1: Term::zero(),
        ddc_double_integral_2: Term::zero(),
        vertical_term: Term::zero(),
        vertical: p.vertical,
        closed: p.closed,
        residual: 0.0,
        residual_error: 0.0,
        seed: ctx.quad.seed,
    }
}

fn check_setting(ctx: &JensenContext, r: f64) -> Result<()> {
    ctx.base.validate(ctx.setting.l)?;
    if r > ctx.setting.rbar {
        return Err(LabError::Precondition(format!("radius {r} exceeds the working radius {}", ctx.setting.rbar)));
    }
    Ok(())
}

/// The two-radius identity for a smooth form `S`.
pub fn lj_report(ctx: &JensenContext, s: &Form, r1: f64, r2: f64) -> Result<JensenReport> {
    if !(r1 > 0.0 && r1 <= r2) {
        return Err(LabError::Precondition(format!("need 0 < r1 <= r2, got r1={r1}, r2={r2}")));
    }
    let (u1, u2) = if r1 == r2 {
        let u = ctx.jitter(r1, 0);
        (u, u)
    } else {
        (ctx.jitter(r1, 0), ctx.jitter(r2, 1))
    };
    check_setting(ctx, u2)?;
    let p = pieces(ctx, s, ctx.setting.alpha(), u2)?;
    let q = p.q;
    let mut rep = blank(JensenVariant::Corona, q, (r1, r2), (u1, u2), ctx, &p);
    if u1 >= u2 {
        return Ok(rep.finish());
    }
    let n = |r: f64| r.powi(-2 * q as i32);
    let (left, right) = rayon::join(
        || -> Result<_> {
            let m = tube_values(ctx, &p.mass, 0.0, &[u1, u2], 0.0)?;
            let c = tube_values(ctx, &p.alpha, u1, &[u2], 0.0)?;
            Ok((m, c[0]))
        },
        || -> Result<_> {
            let w1 = move |t: f64| (n(t) - n(u2)) * 2.0 * t;
            let d1 = profile(ctx, &p.ddc, &w1, u1, u2)?;
            let d2 = profile(ctx, &p.ddc, &|t: f64| 2.0 * t, 0.0, u1)?.scale(n(u1) - n(u2));
            Ok((d1, d2))
        },
    );
    let (masses, corona) = left?;
    let (d1, d2) = right?;
    rep.mass_inner = Term::from(&masses[0]).scale(n(u1));
    rep.mass_outer = Term::from(&masses[1]).scale(n(u2));
    rep.lhs_mass_difference = Term {
        value: rep.mass_outer.value - rep.mass_inner.value,
        error: rep.mass_outer.error + rep.mass_inner.error,
    };
    rep.corona_alpha_integral = Term::from(&corona);
    rep.ddc_double_integral_1 = d1;
    rep.ddc_double_integral_2 = d2;
    Ok(rep.finish())
}

/// Radii `r 2^{−n}`, `n = 1..=count`, used for the `s → 0` mass limit.
const ORIGIN_STEPS: usize = 6;

/// The `r₁ → 0` identity; the inner normalized mass is an extrapolated limit.
pub fn lj_smooth_origin(ctx: &JensenContext, s: &Form, r: f64) -> Result<JensenReport> {
    if !(r > 0.0) {
        return Err(LabError::Precondition(format!("radius {r} must be positive")));
    }
    let u = ctx.jitter(r, 1);
    check_setting(ctx, u)?;
    let p = pieces(ctx, s, ctx.setting.alpha(), u)?;
    let q = p.q;
    let m = ctx.setting.m();
    if q > m {
        return Err(LabError::Precondition(format!("smooth-origin identity needs q <= k-l, got q={q}, k-l={m}")));
    }
    let mut rep = blank(JensenVariant::SmoothOrigin, q, (0.0, r), (0.0, u), ctx, &p);
    let n = |t: f64| t.powi(-2 * q as i32);
    let mut radii: Vec<f64> = (0..=ORIGIN_STEPS).map(|i| u * 0.5f64.powi(i as i32)).collect();
    radii.reverse();
    let (left, right) = rayon::join(
        || -> Result<_> {
            let masses = tube_values(ctx, &p.mass, 0.0, &radii, 0.0)?;
            let a = tube_values(ctx, &p.alpha, 0.0, &[u], 2.0 * q as f64)?;
            Ok((masses, a[0]))
        },
        || profile(ctx, &p.ddc, &|t: f64| (n(t) - n(u)) * 2.0 * t, 0.0, u),
    );
    let (masses, alpha) = left?;
    let d1 = right?;
    // samples by decreasing radius, excluding r itself
    let samples: Vec<Sample> = radii[..ORIGIN_STEPS]
        .iter()
        .zip(&masses)
        .rev()
        .map(|(t, e)| Sample { r: *t, value: e.value.re * n(*t), error: e.error * n(*t) })
        .collect();
    let lim = extrapolate(&samples)?;
    rep.mass_inner = Term { value: lim.limit, error: lim.error };
    rep.mass_outer = Term::from(&masses[ORIGIN_STEPS]).scale(n(u));
    rep.small_radius_limit = Some(lim);
    rep.lhs_mass_difference = Term {
        value: rep.mass_outer.value - rep.mass_inner.value,
        error: rep.mass_outer.error + rep.mass_inner.error,
    };
    rep.corona_alpha_integral = Term::from(&alpha);
    rep.ddc_double_integral_1 = d1;
    Ok(rep.finish())
}

/// The identity for `φ_ε = φ + ε²`: `α_ε` replaces `α` and `(t² + ε²)^q` the powers of `t`.
pub fn eps_jensen(ctx: &JensenContext, s: &Form, r: f64, eps: f64) -> Result<JensenReport> {
    if !(eps > 0.0 && eps < r) {
        return Err(LabError::Precondition(format!("need 0 < eps < r, got eps={eps}, r={r}")));
    }
    let u = ctx.jitter(r, 1);
    check_setting(ctx, u)?;
    let p = pieces(ctx, s, ctx.setting.alpha_eps(eps), u)?;
    let q = p.q;
    let mut rep = blank(JensenVariant::Eps, q, (0.0, r), (0.0, u), ctx, &p);
    rep.eps = Some(eps);
    let n = move |t: f64| (t * t + eps * eps).powi(-(q as i32));
    let (left, right) = rayon::join(
        || -> Result<_> {
            let mass = tube_values(ctx, &p.mass, 0.0, &[u], 0.0)?;
            let a = tube_values(ctx, &p.alpha, 0.0, &[u], 0.0)?;
            Ok((mass[0], a[0]))
        },
        || profile(ctx, &p.ddc, &|t: f64| (n(t) - n(u)) * 2.0 * t, 0.0, u),
    );
    let (mass, alpha) = left?;
    rep.mass_outer = Term::from(&mass).scale(n(u));
    rep.lhs_mass_difference = rep.mass_outer;
    rep.corona_alpha_integral = Term::from(&alpha);
    rep.ddc_double_integral_1 = right?;
    Ok(rep.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerticalFit {
    pub radii: Vec<f64>,
    /// `D(r) = lhs − (rhs without 𝒱)` on `(r/2, r)`
    pub discrepancies: Vec<f64>,
    pub errors: Vec<f64>,
    /// `None` when every `D(r)` is within its error bar
    pub slope: Option<f64>,
    pub degenerate: bool,
    pub pass: bool,
}

/// Fits `log |D(r)|` against `log r` where `D` is the Lelong–Jensen discrepancy on `(r/2, r)`.
pub fn vertical_bound_fit(ctx: &JensenContext, s: &Form, radii: &[f64]) -> Result<VerticalFit> {
    if radii.len() < 2 {
        return Err(LabError::InsufficientSamples { needed: 2, got: radii.len() });
    }
    let reports = radii.iter().map(|r| lj_report(ctx, s, r / 2.0, *r)).collect::<Result<Vec<_>>>()?;
    let discrepancies: Vec<f64> = reports.iter().map(|r| r.residual).collect();
    let errors: Vec<f64> = reports.iter().map(|r| r.residual_error).collect();
    let degenerate = reports
        .iter()
        .all(|r| r.residual.abs() <= 3.0 * r.residual_error + 1e-9 * r.max_term());
    let slope = if degenerate {
        None
    } else {
        let abs: Vec<f64> = discrepancies.iter().map(|d| d.abs().max(f64::MIN_POSITIVE)).collect();
        Some(loglog_slope(radii, &abs))
    };
    let pass = slope.map_or(true, |s| s >= 0.9);
    Ok(VerticalFit { radii: radii.to_vec(), discrepancies, errors, slope, degenerate, pass })
}

/// `S = f · ω_w^l` for real polynomial coefficients `f`: the full-bidegree inputs of the residual
/// checks. Needs `l ≥ 1`.
pub fn catalog_full_bidegree(setting: &LocalSetting) -> Result<Vec<(&'static str, Form)>> {
    let (k, l, m) = (setting.k, setting.l, setting.m());
    if l == 0 {
        return Err(LabError::Invalid("full base bidegree needs l >= 1".into()));
    }
    let one = Polynomial::constant(k, C64::new(1.0, 0.0));
    let z2 = (0..m).fold(Polynomial::zero(k), |a, i| a.add(&Polynomial::var(k, i).mul(&Polynomial::var_bar(k, i))));
    let w2 = (0..l).fold(Polynomial::zero(k), |a, i| a.add(&Polynomial::var(k, m + i).mul(&Polynomial::var_bar(k, m + i))));
    let zw = Polynomial::var(k, 0).mul(&Polynomial::var_bar(k, m));
    let re_zw = zw.add(&zw.conj());
    let coefficients = vec![
        ("omega-w", one.clone()),
        ("radial", one.add(&z2)),
        ("radial-squared", one.add(&z2.mul(&z2)).scale(C64::new(2.0, 0.0))),
        ("mixed-modulus", one.add(&z2.mul(&w2)).add(&w2.scale(C64::new(0.5, 0.0)))),
        ("real-part", one.scale(C64::new(3.0, 0.0)).add(&re_zw).add(&z2)),
    ];
    let omega = setting.omega().power(l);
    let mut out = coefficients
        .into_iter()
        .map(|(name, f)| Ok((name, omega.wedge(&Form::polynomial(k, vec![(0, f)])?))))
        .collect::<Result<Vec<_>>>()?;
    if m >= 2 {
        // one fiber direction only, so q = k−l−1 < k−l
        let line = Form::polynomial(k, vec![(dy(0) | dybar(0), one.add(&z2).scale(C64::new(0.0, 1.0 / PI)))])?;
        out.push(("fiber-line", omega.wedge(&line)));
    }
    Ok(out)
}

/// Real `(1,1)`-forms without full base bidegree, so that `𝒱` survives. Needs `l ≥ 1`.
pub fn catalog_generic(setting: &LocalSetting) -> Result<Vec<(&'static str, Form)>> {
    let (k, l, m) = (setting.k, setting.l, setting.m());
    if l == 0 {
        return Err(LabError::Invalid("a vertical boundary needs l >= 1".into()));
    }
    let ip = C64::new(0.0, 1.0 / PI);
    let one = Polynomial::constant(k, C64::new(1.0, 0.0));
    let z = Polynomial::var(k, 0);
    let w = Polynomial::var(k, m);
    let w2 = w.mul(&w.conj());
    let re_zw = z.mul(&w.conj()).add(&w.mul(&z.conj()));
    let tangential = one.add(&w2).add(&re_zw);
    let fiber_weight = one.add(&w2.mul(&w2)).add(&z.mul(&z.conj()).mul(&w2));
    let spread = Form::polynomial(k, vec![(dy(0) | dybar(0), fiber_weight.scale(ip))])?.add(&setting.omega())?;
    Ok(vec![
        ("tangential-weight", Form::polynomial(k, vec![(dy(0) | dybar(0), tangential.scale(ip))])?),
        ("fiber-plus-base", spread),
    ])
}

