//! The acceptance table, shared by `lelong-lab verify` and the `acceptance` test target.

use crate::catalog::{norm2_alpha, random_positive_form};
use crate::config::{parse, Plan};
use crate::run::execute;
use lelong_core::currents::{ddc_of, dilate, Current};
use lelong_core::forms::{dy, dybar, DiffOp, Form, FormValue, Mask, Polynomial};
use lelong_core::geometry::{BaseDomain, LocalSetting, Metric, OmegaSpec, Tube};
use lelong_core::integrate::{integrate_tube, QuadratureSpec, TensorBudget};
use lelong_core::jensen::{catalog_full_bidegree, catalog_generic, lj_report, vertical_bound_fit, JensenContext};
use lelong_core::lelong::{
    extrapolate_with_ratio, hat_nu, intrinsic_check, kappa_corona, kappa_eps, nu_j, nu_j_schedule, nu_point, top_index,
    IndicatorContext, RadiusSchedule, Sample,
};
use lelong_core::maps::{verify_admissible_orders, AdmissibleMap};
use lelong_core::tangent::{conic_check, default_probes, TangentContext};
use lelong_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

/// Pinned tolerances.
pub mod tol {
    pub const POINT_PLANE: f64 = 1e-3;
    pub const WORKED_EXAMPLE_REL: f64 = 0.02;
    pub const SCALING_REL: f64 = 1e-12;
    pub const BINOMIAL_REL: f64 = 1e-12;
    pub const HORIZONTAL: f64 = 1e-7;
    pub const HORIZONTAL_FRAMES: usize = 200;
    pub const JENSEN_REL: f64 = 1e-3;
    pub const JENSEN_CLOSED_FACTOR: f64 = 10.0;
    /// absolute floor for the closed double integrals when the quadrature error is exactly zero
    pub const JENSEN_CLOSED_FLOOR: f64 = 1e-15;
    pub const VERTICAL_SLOPE: f64 = 0.9;
    pub const INTRINSIC_FACTOR: f64 = 2.0;
    pub const CONIC_PASS: f64 = 0.02;
    pub const CONIC_CONTROL: f64 = 0.1;
    pub const FIBER_SLOPE: f64 = 1.9;
    pub const BASE_SLOPE: f64 = 0.9;
    pub const PHI_SLOPE: f64 = 2.9;
    pub const MC_SIGMAS: f64 = 3.0;
    pub const MC_RUNS: u64 = 100;
    pub const MC_INSIDE: usize = 95;
    pub const PROPERTY_CASES: usize = 64;
    pub const LEIBNIZ: f64 = 1e-12;
    pub const FUNCTORIAL: f64 = 1e-10;
    /// roundoff allowance next to error bars that can be exactly zero
    pub const ROUNDOFF: f64 = 1e-12;
}

/// `ν_1` for `α` on `C² × D` with `p = 1`: `2^2 ∫_D ω`.
pub const WORKED_EXAMPLE_NU1: f64 = 8.0;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Check = fn() -> Result<Outcome, String>;

#[derive(Clone)]
pub struct Criterion {
    pub id: u8,
    pub tag: &'static str,
    pub title: &'static str,
    check: Check,
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub tag: &'static str,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {:<14} {:<44} {:>7.1}s  {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.tag,
            self.title,
            self.seconds,
            self.detail
        )
    }
}

impl Criterion {
    pub fn run(&self) -> CriterionResult {
        let t0 = Instant::now();
        let out = (self.check)().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        CriterionResult {
            id: self.id,
            tag: self.tag,
            title: self.title,
            pass: out.pass,
            detail: out.detail,
            seconds: t0.elapsed().as_secs_f64(),
        }
    }
}

pub fn criteria() -> Vec<Criterion> {
    let c = |id, tag, title, check| Criterion { id, tag, title, check };
    vec![
        c(1, "point", "point Lelong number of planes", point_planes as Check),
        c(2, "lelong", "alpha power worked example", worked_example),
        c(3, "lelong", "smooth currents carry no transverse mass", smooth_vanishing),
        c(4, "kappa", "top indicator monotone, corona difference", monotonicity),
        c(5, "lelong", "scaling identity", scaling_identity),
        c(6, "lelong", "binomial identity", binomial_identity),
        c(7, "geometry", "horizontal restriction of alpha and beta", horizontal_restriction),
        c(8, "jensen", "Lelong-Jensen residuals", jensen_residuals),
        c(9, "jensen", "vertical boundary term is O(r)", vertical_asymptotics),
        c(10, "kappa_eps", "regularized indicator limit", eps_interpretation),
        c(11, "intrinsic", "top number under an admissible change", intrinsicness),
        c(12, "lelong", "top number of ddc of a psh family", ddc_vanishing),
        c(13, "conic", "tangent current is conic", tangent_conic),
        c(14, "maps", "admissible contact orders", admissible_orders),
        c(15, "infrastructure", "determinism, error honesty, properties", infrastructure),
    ]
}

/// Criteria whose tag or number matches `only`.
pub fn select(only: Option<&str>) -> Vec<Criterion> {
    let all = criteria();
    match only {
        None => all,
        Some(key) => all.into_iter().filter(|c| c.tag == key || c.id.to_string() == key).collect(),
    }
}

pub fn tags() -> Vec<&'static str> {
    let mut t: Vec<&str> = criteria().iter().map(|c| c.tag).collect();
    t.dedup();
    t
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn fast() -> QuadratureSpec {
    QuadratureSpec::tensor(TensorBudget { panels: 6, radial: 6, angular: 0, base: 8 })
}

fn ctx(k: usize, l: usize, p: usize) -> IndicatorContext {
    let base = if l == 0 { BaseDomain::Point } else { BaseDomain::Ball { center: vec![c(0.0); l], radius: 1.0 } };
    IndicatorContext::new(LocalSetting::standard(k, l, p), base, fast())
}

fn e2s(e: lelong_core::LabError) -> String {
    e.to_string()
}

fn point_planes() -> Result<Outcome, String> {
    let line = Current::integration_linear(2, 1, &[vec![C64::new(0.6, 0.2), c(-0.4)]]).map_err(e2s)?;
    let plane = Current::integration_linear(3, 1, &[vec![c(1.0), c(0.0), c(1.0)], vec![c(0.0), C64::new(0.0, 1.0), c(0.3)]]).map_err(e2s)?;
    let line3 = Current::integration_linear(3, 2, &[vec![c(0.5), c(-0.5), C64::new(0.0, 0.5)]]).map_err(e2s)?;
    let mut worst = 0.0f64;
    for t in [&line, &plane, &line3] {
        let o = vec![c(0.0); t.k()];
        for r in [0.1, 0.2, 0.4] {
            let v = nu_point(t, &o, r, &fast()).map_err(e2s)?;
            worst = worst.max((v.value.re - 1.0).abs());
        }
    }
    Ok(Outcome::new(worst <= tol::POINT_PLANE, format!("max |nu - 1| = {worst:.2e}")))
}

fn worked_example() -> Result<Outcome, String> {
    let cx = ctx(3, 1, 1);
    let t = Current::alpha_power(3, 1, 1).map_err(e2s)?;
    let sched = RadiusSchedule::new(0.5, 5).map_err(e2s)?;
    let nu1 = nu_j_schedule(&cx, &t, 1, &sched).map_err(e2s)?;
    let rel = (nu1.limit - WORKED_EXAMPLE_NU1).abs() / WORKED_EXAMPLE_NU1;
    let mut pass = rel <= tol::WORKED_EXAMPLE_REL;
    let mut others = Vec::new();
    for j in [0, 2] {
        let e = nu_j_schedule(&cx, &t, j, &sched).map_err(e2s)?;
        pass &= e.limit.abs() <= e.error + tol::ROUNDOFF;
        others.push(format!("nu_{j} = {:.1e} +- {:.1e}", e.limit, e.error));
    }
    Ok(Outcome::new(pass, format!("nu_1 = {:.6} (rel {rel:.1e}); {}", nu1.limit, others.join(", "))))
}

fn smooth_vanishing() -> Result<Outcome, String> {
    let mut pass = true;
    let mut worst = 0.0f64;
    for (k, l) in [(3, 1), (3, 2)] {
        let cx = ctx(k, l, 1);
        let t = Current::smooth(l, random_positive_form(k, 7 + k as u64)).map_err(e2s)?;
        let sched = RadiusSchedule::new(0.4, 5).map_err(e2s)?;
        for j in cx.setting.m_low() as i64..=cx.setting.m_high() as i64 {
            let e = nu_j_schedule(&cx, &t, j, &sched).map_err(e2s)?;
            if j == l as i64 - 1 {
                pass &= e.limit >= -e.error;
            } else {
                pass &= e.limit.abs() <= e.error;
                worst = worst.max(e.limit.abs());
            }
        }
    }
    Ok(Outcome::new(pass, format!("max |nu_j| off the diagonal index = {worst:.1e}")))
}

fn monotonicity() -> Result<Outcome, String> {
    let cx = ctx(3, 1, 1);
    let top = top_index(&cx.setting);
    let sched = RadiusSchedule::new(0.8, 6).map_err(e2s)?;
    let tilted = Current::integration_linear(3, 1, &[vec![c(1.0), c(0.0), c(1.0)], vec![c(0.0), c(1.0), c(0.0)]]).map_err(e2s)?;
    let alpha = Current::alpha_power(3, 1, 1).map_err(e2s)?;
    let tau = AdmissibleMap::strongly_admissible(3, 1, &[vec![c(0.2), c(0.0)], vec![c(0.0), c(0.1)]], &[vec![c(0.1), c(0.0)]])
        .map_err(e2s)?;
    let light = QuadratureSpec::tensor(TensorBudget { panels: 4, radial: 5, angular: 6, base: 6 });
    let under_tau = IndicatorContext { quad: light, ..cx.clone() }.with_map(tau);
    let cases = [("alpha", alpha.clone(), cx.clone()), ("tilted plane", tilted, cx.clone()), ("alpha under tau", alpha, under_tau)];
    let mut pass = true;
    let mut worst_gap = 0.0f64;
    for (name, t, cx) in &cases {
        let e = nu_j_schedule(cx, t, top, &sched).map_err(e2s)?;
        if !e.nondecreasing_in_r() {
            return Ok(Outcome::new(false, format!("{name}: not nondecreasing {:?}", e.samples)));
        }
        // coronas between schedule radii, so the ν values are the schedule samples
        for (a, b) in [(3, 1), (5, 2)] {
            let (lo, hi) = (e.samples[a], e.samples[b]);
            let k = kappa_corona(cx, t, top, lo.r, hi.r).map_err(e2s)?;
            let gap = (k.value.re - (hi.value - lo.value)).abs();
            let bar = k.error + hi.error + lo.error + tol::ROUNDOFF * hi.value.abs().max(1.0);
            pass &= gap <= bar;
            worst_gap = worst_gap.max(gap / bar);
        }
    }
    Ok(Outcome::new(pass, format!("6 radii nondecreasing; max kappa gap / combined error = {worst_gap:.2}")))
}

fn scaling_identity() -> Result<Outcome, String> {
    let cx = ctx(3, 1, 1);
    let r = 0.4;
    let mut worst = 0.0f64;
    for t in [norm2_alpha(3, 1).map_err(e2s)?, Current::smooth(1, random_positive_form(3, 3)).map_err(e2s)?] {
        for lam in [2.0, 5.0] {
            let d = dilate(c(lam), &t).map_err(e2s)?;
            for j in [0i64, 1] {
                let a = nu_j(&cx, &t, j, r / lam).map_err(e2s)?;
                let b = nu_j(&cx, &d, j, r).map_err(e2s)?;
                worst = worst.max((a.value - b.value).norm() / a.value.norm().max(f64::MIN_POSITIVE));
            }
        }
    }
    Ok(Outcome::new(worst <= tol::SCALING_REL, format!("max relative gap = {worst:.1e}")))
}

fn binomial_identity() -> Result<Outcome, String> {
    let mut worst = 0.0f64;
    for (k, l, p) in [(3, 1, 1), (4, 2, 1)] {
        let mut cx = ctx(k, l, p);
        if k == 4 {
            cx.quad = QuadratureSpec::tensor(TensorBudget { panels: 3, radial: 4, angular: 4, base: 4 });
        }
        let t = if k == 3 { Current::alpha_power(k, l, 1) } else { Current::smooth(l, random_positive_form(k, 5)) }.map_err(e2s)?;
        for j in cx.setting.m_low() as i64..=cx.setting.m_high() as i64 {
            let h = hat_nu(&cx, &t, j, 0.3).map_err(e2s)?;
            worst = worst.max(h.residual / h.direct.abs().max(1.0));
        }
    }
    Ok(Outcome::new(worst <= tol::BINOMIAL_REL, format!("max residual = {worst:.1e}")))
}

fn horizontal_restriction() -> Result<Outcome, String> {
    let mut worst = 0.0f64;
    let settings = [
        LocalSetting::standard(3, 1, 1),
        LocalSetting::build(3, 1, 1, Metric::bump_first(3, 1), OmegaSpec::Standard, 1.0).map_err(e2s)?,
    ];
    for s in &settings {
        for (n, t) in [0.1, 0.5, 1.0].into_iter().enumerate() {
            let frames = s.level_set_frames(t, &BaseDomain::unit_disc(), tol::HORIZONTAL_FRAMES, 11 + n as u64);
            if frames.len() != tol::HORIZONTAL_FRAMES {
                return Ok(Outcome::new(false, format!("only {} frames at t = {t}", frames.len())));
            }
            worst = worst.max(s.horizontal_restriction_check(t, &frames).map_err(e2s)?);
        }
    }
    Ok(Outcome::new(worst <= tol::HORIZONTAL, format!("max pointwise error = {worst:.1e} over 2 metrics x 3 levels")))
}

fn jensen_residuals() -> Result<Outcome, String> {
    let cx = JensenContext::new(LocalSetting::standard(2, 1, 1), BaseDomain::unit_disc(), QuadratureSpec::default());
    let cat = catalog_full_bidegree(&cx.setting).map_err(e2s)?;
    let (mut pass, mut closed, mut open, mut worst) = (cat.len() >= 5, 0, 0, 0.0f64);
    for (name, s) in &cat {
        let r = lj_report(&cx, s, 0.25, 0.5).map_err(e2s)?;
        pass &= r.passes(tol::JENSEN_REL);
        worst = worst.max(r.residual.abs() / r.max_term());
        if r.closed {
            closed += 1;
            for t in [r.ddc_double_integral_1, r.ddc_double_integral_2] {
                if t.value.abs() > tol::JENSEN_CLOSED_FACTOR * t.error.max(tol::JENSEN_CLOSED_FLOOR) {
                    return Ok(Outcome::new(false, format!("{name}: closed input with double integral {:e}", t.value)));
                }
            }
        } else {
            open += 1;
        }
    }
    pass &= closed >= 1 && open >= 1;
    Ok(Outcome::new(pass, format!("{} inputs ({closed} closed), max relative residual = {worst:.1e}", cat.len())))
}

fn vertical_asymptotics() -> Result<Outcome, String> {
    let cx = JensenContext::new(LocalSetting::standard(2, 1, 1), BaseDomain::unit_disc(), QuadratureSpec::default());
    let radii = [0.4, 0.2, 0.1, 0.04];
    let generic = catalog_generic(&cx.setting).map_err(e2s)?;
    let mut pass = generic.len() >= 2;
    let mut slopes = Vec::new();
    for (name, s) in &generic {
        let fit = vertical_bound_fit(&cx, s, &radii).map_err(e2s)?;
        let slope = fit.slope.unwrap_or(f64::NAN);
        pass &= !fit.degenerate && slope >= tol::VERTICAL_SLOPE;
        slopes.push(format!("{name} {slope:.3}"));
    }
    Ok(Outcome::new(pass, format!("slopes: {}", slopes.join(", "))))
}

fn eps_interpretation() -> Result<Outcome, String> {
    let cx = ctx(3, 1, 1);
    let t = Current::alpha_power(3, 1, 1).map_err(e2s)?;
    let j = cx.setting.l as i64;
    let r = 0.4;
    let eps: Vec<f64> = [2.0, 4.0, 8.0, 16.0].iter().map(|d| r / d).collect();
    let seq = kappa_eps(&cx, &t, j, r, &eps).map_err(e2s)?;
    let nu = nu_j(&cx, &t, j, r).map_err(e2s)?;
    let samples: Vec<Sample> = seq.iter().map(|(e, v)| Sample { r: *e, value: v.value.re, error: v.error }).collect();
    let x = extrapolate_with_ratio(&samples, 2.0).map_err(e2s)?;
    let gap = (x.limit - nu.value.re).abs();
    let bar = x.error + nu.error;
    Ok(Outcome::new(gap <= bar, format!("eps -> 0 limit {:.6} vs nu_top(r) {:.6}: gap {gap:.1e} <= {bar:.1e}", x.limit, nu.value.re)))
}

fn intrinsicness() -> Result<Outcome, String> {
    let s = LocalSetting::standard(2, 1, 1);
    let t = Current::alpha_power(2, 1, 1).map_err(e2s)?;
    let id = AdmissibleMap::identity(2, 1);
    let tau = AdmissibleMap::strongly_admissible(2, 1, &[vec![c(0.2)]], &[vec![c(0.1)]]).map_err(e2s)?;
    let sched = RadiusSchedule::new(0.2, 4).map_err(e2s)?;
    let rows = intrinsic_check(&t, &s, &BaseDomain::unit_disc(), (&id, &tau), &[top_index(&s)], &sched, &fast()).map_err(e2s)?;
    let r = &rows[0];
    let pass = r.difference <= tol::INTRINSIC_FACTOR * r.combined_error + tol::ROUNDOFF;
    Ok(Outcome::new(
        pass,
        format!("limits {:.8} / {:.8}, difference {:.1e}, combined error {:.1e}", r.first.limit, r.second.limit, r.difference, r.combined_error),
    ))
}

fn ddc_vanishing() -> Result<Outcome, String> {
    let d = ddc_of(&norm2_alpha(3, 1).map_err(e2s)?).map_err(e2s)?;
    let cx = ctx(3, 1, 2);
    let e = nu_j_schedule(&cx, &d, top_index(&cx.setting), &RadiusSchedule::new(0.4, 5).map_err(e2s)?).map_err(e2s)?;
    Ok(Outcome::new(e.limit.abs() <= e.error, format!("limit {:.1e} +- {:.1e}", e.limit, e.error)))
}

fn tangent_conic() -> Result<Outcome, String> {
    let cx = TangentContext::new(LocalSetting::standard(2, 0, 1), BaseDomain::Point, 0.5, QuadratureSpec::default());
    let probes = default_probes(&cx, 1).map_err(e2s)?;
    let alpha = Current::alpha_power(2, 0, 1).map_err(e2s)?;
    let a = conic_check(&cx, &alpha, &[0.5, 2.0, 3.0], &probes).map_err(e2s)?;
    let beta = Current::smooth(0, cx.setting.beta()).map_err(e2s)?;
    let b = conic_check(&cx, &beta, &[2.0], &probes).map_err(e2s)?;
    let pass = a.passes(tol::CONIC_PASS) && b.max_deviation > tol::CONIC_CONTROL;
    Ok(Outcome::new(pass, format!("alpha deviation {:.1e}, beta control {:.3}", a.max_deviation, b.max_deviation)))
}

fn admissible_orders() -> Result<Outcome, String> {
    let radii: Vec<f64> = (0..6).map(|n| 0.1 / 2f64.powi(n)).collect();
    let mut lines = Vec::new();
    let mut pass = true;
    let s2 = LocalSetting::standard(2, 1, 1);
    let s3 = LocalSetting::standard(3, 1, 1);
    let maps = [
        (&s2, AdmissibleMap::strongly_admissible(2, 1, &[vec![c(0.7)]], &[vec![c(0.5)]]).map_err(e2s)?),
        (&s3, AdmissibleMap::strongly_admissible(3, 1, &[vec![c(0.2), c(0.0)], vec![c(0.1), c(-0.1)]], &[vec![c(0.5), c(0.3)]]).map_err(e2s)?),
    ];
    for (s, tau) in &maps {
        let phi = |y: &[C64]| s.phi(y);
        let base = vec![vec![c(0.0)], vec![C64::new(0.4, -0.3)]];
        let fit = verify_admissible_orders(tau, &phi, &radii, &base);
        pass &= fit.fiber_slope >= tol::FIBER_SLOPE && fit.base_slope >= tol::BASE_SLOPE && fit.phi_slope >= tol::PHI_SLOPE;
        lines.push(format!("k={}: {:.2}/{:.2}/{:.2}", s.k, fit.fiber_slope, fit.base_slope, fit.phi_slope));
    }
    let k = 2;
    let bad = AdmissibleMap::polynomial(2, 1, vec![Polynomial::var(k, 0).add(&Polynomial::var_bar(k, 0).scale(c(0.1))), Polynomial::var(k, 1)])
        .map_err(e2s)?;
    let phi = |y: &[C64]| s2.phi(y);
    let fit = verify_admissible_orders(&bad, &phi, &radii, &[vec![c(0.0)]]);
    pass &= fit.fiber_slope < tol::FIBER_SLOPE;
    lines.push(format!("control fiber {:.2}", fit.fiber_slope));
    Ok(Outcome::new(pass, format!("fiber/base/phi slopes {}", lines.join("; "))))
}

/// A small stochastic run used for the byte-identity check.
pub const DETERMINISM_CONFIG: &str = r#"{
  "schema": 1,
  "seed": 20240611,
  "setting": {"k": 3, "l": 1, "p": 1},
  "current": {"kind": "smooth", "catalog": "random-positive"},
  "task": {"kind": "lelong", "radii": {"r0": 0.4, "count": 4}},
  "quadrature": {"method": "stratified_mc", "samples": 4000, "strata": 64}
}"#;

fn determinism() -> Result<String, String> {
    let plan = Plan::resolve(parse(DETERMINISM_CONFIG).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let a = execute(&plan).map_err(|e| e.to_string())?;
    let b = execute(&plan).map_err(|e| e.to_string())?;
    let (ca, cb) = (a.results_csv().map_err(|e| e.to_string())?, b.results_csv().map_err(|e| e.to_string())?);
    if ca != cb || a.summary_json() != b.summary_json() {
        return Err("reruns differ".into());
    }
    Ok(format!("{} bytes identical", ca.len() + a.summary_json().len()))
}

type Integrand = fn(&[C64]) -> lelong_core::Result<C64>;

fn z2(y: &[C64]) -> f64 {
    y[0].norm_sqr() + y[1].norm_sqr()
}

/// Integrands over `Tube(D, 1/2)` in `C² × C` with their exact integrals.
fn oracle_integrands() -> Vec<(&'static str, Integrand, f64, f64)> {
    let ball = PI * PI / 2.0 * 0.0625;
    vec![
        ("one", |_| Ok(c(1.0)), PI * ball, 0.0),
        ("inverse-square", |y| Ok(c(1.0 / z2(y))), PI * PI * PI * 0.25, 2.0),
        ("inverse-square-plus-re-w", |y| Ok(c(1.0 / z2(y) + y[2].re * y[2].re)), PI * PI * PI * 0.25 + PI / 4.0 * ball, 2.0),
        ("base-modulus", |y| Ok(c(y[2].norm_sqr())), PI / 2.0 * ball, 0.0),
        ("fiber-modulus", |y| Ok(c(z2(y))), PI * 2.0 * PI * PI * 0.5f64.powi(6) / 6.0, 0.0),
    ]
}

fn error_honesty() -> Result<String, String> {
    let s = LocalSetting::standard(3, 1, 1);
    let tube = Tube::solid(BaseDomain::unit_disc(), 0.5);
    let mut worst = usize::MAX;
    for (name, f, want, weight) in oracle_integrands() {
        let mut inside = 0;
        for seed in 0..tol::MC_RUNS {
            let spec = QuadratureSpec::mc(2000, seed).with_singular_weight(weight);
            let e = integrate_tube(&s, &f, &tube, &spec).map_err(e2s)?;
            if (e.value.re - want).abs() <= tol::MC_SIGMAS * e.error {
                inside += 1;
            }
        }
        if inside < tol::MC_INSIDE {
            return Err(format!("{name}: {inside}/{} runs within 3 sigma", tol::MC_RUNS));
        }
        worst = worst.min(inside);
    }
    Ok(format!("worst coverage {worst}/{}", tol::MC_RUNS))
}

fn close_values(a: &FormValue, b: &FormValue, tol: f64) -> bool {
    let masks: Vec<Mask> = a.terms().iter().chain(b.terms()).map(|t| t.0).collect();
    masks.iter().all(|&m| (a.get(m) - b.get(m)).norm() <= tol)
}

fn random_poly(rng: &mut ChaCha8Rng, k: usize) -> Polynomial {
    let mut p = Polynomial::constant(k, C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)));
    for _ in 0..3 {
        let mut mono = Polynomial::constant(k, C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)));
        for _ in 0..rng.gen_range(1..=3) {
            let v = rng.gen_range(0..k);
            mono = mono.mul(&if rng.gen_bool(0.5) { Polynomial::var(k, v) } else { Polynomial::var_bar(k, v) });
        }
        p = p.add(&mono);
    }
    p
}

fn random_one_form(rng: &mut ChaCha8Rng, k: usize) -> Form {
    let a = Form::polynomial(k, (0..k).map(|i| (dy(i), random_poly(rng, k))).collect()).expect("(1,0) part");
    let b = Form::polynomial(k, (0..k).map(|i| (dybar(i), random_poly(rng, k))).collect()).expect("(0,1) part");
    a.add(&b).expect("same degree")
}

fn random_point(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> Vec<C64> {
    (0..k).map(|_| C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))).collect()
}

fn property_suites() -> Result<String, String> {
    let k = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..tol::PROPERTY_CASES {
        let f = random_one_form(&mut rng, k);
        let g = Form::polynomial(k, vec![(0, random_poly(&mut rng, k))]).expect("function");
        let h = Form::polynomial(k, vec![(0, random_poly(&mut rng, k))]).expect("function");
        let y = random_point(&mut rng, k, 1.0);
        // d(u∧v) = du∧v + (−1)^deg u u∧dv
        for (u, v) in [(&f, &g), (&g, &f), (&f, &f.derivative(DiffOp::D)), (&g, &h)] {
            let lhs = u.wedge(v).derivative(DiffOp::D).eval(&y);
            let sign = if u.degree() % 2 == 0 { 1.0 } else { -1.0 };
            let rhs = u.derivative(DiffOp::D).wedge(v).add(&u.wedge(&v.derivative(DiffOp::D)).scale(c(sign))).map_err(e2s)?.eval(&y);
            if !close_values(&lhs, &rhs, tol::LEIBNIZ * (1.0 + lhs.max_abs().max(rhs.max_abs()))) {
                return Err(format!("Leibniz rule fails in case {case}"));
            }
        }
        // ddᶜ(gh) = g ddᶜh + h ddᶜg + dg∧dᶜh + dh∧dᶜg
        let lhs = g.wedge(&h).derivative(DiffOp::Ddc).eval(&y);
        let rhs = g
            .wedge(&h.derivative(DiffOp::Ddc))
            .add(&h.wedge(&g.derivative(DiffOp::Ddc)))
            .and_then(|s| s.add(&g.derivative(DiffOp::D).wedge(&h.derivative(DiffOp::Dc))))
            .and_then(|s| s.add(&h.derivative(DiffOp::D).wedge(&g.derivative(DiffOp::Dc))))
            .map_err(e2s)?
            .eval(&y);
        if !close_values(&lhs, &rhs, tol::LEIBNIZ * (1.0 + lhs.max_abs().max(rhs.max_abs()))) {
            return Err(format!("ddc product rule fails in case {case}"));
        }
        // d∘d = 0 and d∘ddᶜ = 0, up to the rounding of the i/π factors
        let gh = g.wedge(&h);
        for (inner, op) in [(&gh, DiffOp::D), (&gh, DiffOp::Ddc), (&f, DiffOp::D)] {
            let once = inner.derivative(op);
            let scale = 1.0 + once.eval(&y).max_abs();
            if once.derivative(DiffOp::D).eval(&y).max_abs() > tol::LEIBNIZ * scale {
                return Err(format!("d∘d does not vanish in case {case}"));
            }
        }
        // (σ∘τ)* = τ*σ*, and d commutes with pullback
        let (q, sh) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let sigma = AdmissibleMap::strongly_admissible(2, 1, &[vec![c(q)]], &[vec![c(sh)]]).map_err(e2s)?;
        let tau = AdmissibleMap::polynomial(
            2,
            1,
            vec![
                Polynomial::var(k, 0).add(&Polynomial::var(k, 0).mul(&Polynomial::var_bar(k, 0)).scale(c(0.3))),
                Polynomial::var(k, 1).add(&Polynomial::var_bar(k, 0).scale(c(sh))),
            ],
        )
        .map_err(e2s)?;
        let comp = AdmissibleMap::composite(vec![sigma.clone(), tau.clone()]).map_err(e2s)?;
        let y = random_point(&mut rng, k, 0.5);
        let one = f.pullback(&comp).eval(&y);
        let two = f.pullback(&sigma).pullback(&tau).eval(&y);
        let three = f.derivative(DiffOp::D).pullback(&comp).eval(&y);
        let four = f.pullback(&comp).derivative(DiffOp::D).eval(&y);
        let scale = 1.0 + one.max_abs().max(three.max_abs());
        if !close_values(&one, &two, tol::FUNCTORIAL * scale) || !close_values(&three, &four, tol::FUNCTORIAL * scale) {
            return Err(format!("pullback is not functorial in case {case}"));
        }
    }
    // normalization: ddᶜ|y₀|² = (i/π) dy₀∧dȳ₀
    let n2 = Form::polynomial(k, vec![(0, Polynomial::var(k, 0).mul(&Polynomial::var_bar(k, 0)))]).map_err(e2s)?;
    let v = n2.derivative(DiffOp::Ddc).eval(&[c(0.3), c(-0.2)]);
    if (v.get(dy(0) | dybar(0)) - C64::new(0.0, 1.0 / PI)).norm() > tol::LEIBNIZ {
        return Err(format!("ddc|y0|^2 has coefficient {}", v.get(dy(0) | dybar(0))));
    }
    Ok(format!("{} cases each", tol::PROPERTY_CASES))
}

fn infrastructure() -> Result<Outcome, String> {
    let parts: [(&str, fn() -> Result<String, String>); 3] =
        [("determinism", determinism), ("error honesty", error_honesty), ("properties", property_suites)];
    let mut pass = true;
    let mut lines = Vec::new();
    for (name, f) in parts {
        match f() {
            Ok(d) => lines.push(format!("{name}: {d}")),
            Err(e) => {
                pass = false;
                lines.push(format!("{name} FAILED: {e}"));
            }
        }
    }
    Ok(Outcome::new(pass, lines.join("; ")))
}
