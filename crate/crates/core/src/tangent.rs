//! Tangent currents along `V`: the family `T_λ = (A_λ)_*(τ_*T)` sampled on a finite
//! dictionary of test forms, with conicity and partial pluriharmonicity checks for limits.
//!
//! Test forms are polynomial bumps `χ·μ` with
//! `χ = (R² − ‖z‖²)³ · (base factor)³`, which vanishes to third order on the boundary of
//! the working tube. Pairing over the tube therefore equals pairing with the compactly
//! supported extension by zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::currents::{dilate, euclidean_kahler, pair, pushforward, Current, Region};
use crate::error::{LabError, Result};
use crate::forms::{dy, dybar, poly_field, DiffOp, Form, FormValue, Polynomial};
use crate::geometry::{BaseDomain, LocalSetting, Metric, Tube};
use crate::integrate::{Estimate, QuadratureSpec};
use crate::maps::AdmissibleMap;
use crate::C64;

const I_OVER_PI: C64 = C64 { re: 0.0, im: std::f64::consts::FRAC_1_PI };

/// Working tube and budget shared by every pairing.
#[derive(Debug, Clone)]
pub struct TangentContext {
    pub setting: LocalSetting,
    pub base: BaseDomain,
    /// fiber radius `R` of the working tube
    pub radius: f64,
    pub quad: QuadratureSpec,
    /// relative slack (against the largest entry of a column) in convergence verdicts
    pub rtol: f64,
}

impl TangentContext {
    pub fn new(setting: LocalSetting, base: BaseDomain, radius: f64, quad: QuadratureSpec) -> Self {
        Self { setting, base, radius, quad, rtol: 1e-6 }
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn region(&self) -> Region {
        Region::Tube { setting: self.setting.clone(), tube: Tube::solid(self.base.clone(), self.radius) }
    }

    fn validate(&self) -> Result<()> {
        self.base.validate(self.setting.l)?;
        if !(self.radius > 0.0) {
            return Err(LabError::Invalid("working tube radius must be > 0".into()));
        }
        if self.setting.metric != Metric::Identity {
            return Err(LabError::UnsupportedKind("bump probes need the identity fiber metric".into()));
        }
        self.quad.validate()
    }
}

/// A test form; `bump` marks forms that vanish to third order on the tube boundary.
#[derive(Debug, Clone)]
pub struct Probe {
    pub name: String,
    pub form: Form,
    /// number of `dz, dz̄` factors, when every component has the same count
    pub fiber_degree: Option<usize>,
    pub bump: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub name: String,
    pub degree: usize,
    pub fiber_degree: Option<usize>,
    pub bump: bool,
}

impl Probe {
    pub fn plain(name: &str, form: Form) -> Self {
        Self { name: name.into(), form, fiber_degree: None, bump: false }
    }

    /// `ω^j ∧ β^(k−p−j)`, whose pairing over the working tube is a tube mass.
    pub fn indicator(setting: &LocalSetting, j: usize, p: usize) -> Result<Self> {
        if j + p > setting.k {
            return Err(LabError::Invalid(format!("no indicator probe with j = {j} for p = {p}")));
        }
        let form = setting.omega().power(j).wedge(&setting.beta().power(setting.k - p - j));
        Ok(Self { name: format!("indicator-{j}"), form, fiber_degree: Some(2 * (setting.k - p - j)), bump: false })
    }

    pub fn record(&self) -> ProbeRecord {
        ProbeRecord { name: self.name.clone(), degree: self.form.degree(), fiber_degree: self.fiber_degree, bump: self.bump }
    }
}

fn sq_dist(k: usize, i: usize, c: C64) -> Polynomial {
    let a = Polynomial::var(k, i).add(&Polynomial::constant(k, -c));
    a.mul(&a.conj())
}

/// `χ = (R² − ‖z‖²)³ · (base factor)³`.
pub fn bump(setting: &LocalSetting, base: &BaseDomain, radius: f64) -> Result<Polynomial> {
    let (k, m) = (setting.k, setting.m());
    base.validate(setting.l)?;
    let one = |c: f64| Polynomial::constant(k, C64::new(c, 0.0));
    let mut fiber = one(radius * radius);
    for i in 0..m {
        fiber = fiber.add(&sq_dist(k, i, C64::new(0.0, 0.0)).scale(C64::new(-1.0, 0.0)));
    }
    let mut chi = fiber.pow(3);
    match base {
        BaseDomain::Ball { center, radius } => {
            let mut f = one(radius * radius);
            for (j, c) in center.iter().enumerate() {
                f = f.add(&sq_dist(k, m + j, *c).scale(C64::new(-1.0, 0.0)));
            }
            chi = chi.mul(&f.pow(3));
        }
        BaseDomain::Polydisc { center, radii } => {
            for (j, (c, r)) in center.iter().zip(radii).enumerate() {
                let f = one(r * r).add(&sq_dist(k, m + j, *c).scale(C64::new(-1.0, 0.0)));
                chi = chi.mul(&f.pow(3));
            }
        }
        BaseDomain::Point => {}
    }
    Ok(chi)
}

fn coefficients(k: usize) -> Vec<(&'static str, Polynomial)> {
    let last = k - 1;
    let re = |p: Polynomial| p.add(&p.conj());
    vec![
        ("1", Polynomial::constant(k, C64::new(1.0, 0.0))),
        ("|y0|^2", sq_dist(k, 0, C64::new(0.0, 0.0))),
        ("|ylast|^2", sq_dist(k, last, C64::new(0.0, 0.0))),
        ("2re(y0*conj(ylast))", re(Polynomial::var(k, 0).mul(&Polynomial::var_bar(k, last)))),
        ("2re(y0)", re(Polynomial::var(k, 0))),
        ("2re(ylast)", re(Polynomial::var(k, last))),
    ]
}

fn subsets(k: usize, d: usize) -> Vec<Vec<usize>> {
    (0u32..1 << k).filter(|s| s.count_ones() as usize == d).map(|s| (0..k).filter(|i| s & (1 << i) != 0).collect()).collect()
}

/// Bump probes of degree `2d`: first `χ·ω₀^d`, then `χ·c·∏_{i∈I} (i/π) dy_i∧dȳ_i` over
/// coefficients `c` and index sets `|I| = d`, truncated to `count`.
pub fn bump_probes(ctx: &TangentContext, d: usize, count: usize) -> Result<Vec<Probe>> {
    ctx.validate()?;
    let (k, m) = (ctx.setting.k, ctx.setting.m());
    if d > k {
        return Err(LabError::Invalid(format!("probe degree 2·{d} exceeds the chart dimension")));
    }
    let chi = bump(&ctx.setting, &ctx.base, ctx.radius)?;
    let mut out = vec![Probe {
        name: "mass".into(),
        form: euclidean_kahler(k).power(d).mul_field(poly_field(chi.clone())),
        fiber_degree: if d == 0 { Some(0) } else { None },
        bump: true,
    }];
    if d == 0 {
        for (name, c) in coefficients(k).into_iter().skip(1) {
            let form = Form::polynomial(k, vec![(0, chi.mul(&c))])?;
            out.push(Probe { name: format!("bump*{name}"), form, fiber_degree: Some(0), bump: true });
        }
    } else {
        for (name, c) in coefficients(k) {
            for set in subsets(k, d) {
                let mut form = Form::constant(k, FormValue::scalar(C64::new(1.0, 0.0)))?;
                for &i in &set {
                    form = form.wedge(&Form::constant(k, FormValue::monomial(dy(i) | dybar(i), I_OVER_PI))?);
                }
                let fiber = 2 * set.iter().filter(|&&i| i < m).count();
                let label = set.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("");
                out.push(Probe {
                    name: format!("bump*{name}*dd{label}"),
                    form: form.mul_field(poly_field(chi.mul(&c))),
                    fiber_degree: Some(fiber),
                    bump: true,
                });
            }
        }
    }
    out.truncate(count);
    Ok(out)
}

/// The default dictionary of 12 probes for currents of bidimension `k − p`.
pub fn default_probes(ctx: &TangentContext, p: usize) -> Result<Vec<Probe>> {
    if p > ctx.setting.k {
        return Err(LabError::Invalid(format!("p = {p} exceeds k = {}", ctx.setting.k)));
    }
    bump_probes(ctx, ctx.setting.k - p, 12)
}

/// `λ_n = 2^(first + n)`, `n < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub first: i32,
    pub count: usize,
}

impl LambdaSchedule {
    pub fn new(count: usize) -> Self {
        Self { first: 0, count }
    }

    pub fn lambdas(&self) -> Vec<f64> {
        (0..self.count).map(|n| 2f64.powi(self.first + n as i32)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub probe: String,
    pub converged: bool,
    /// `|v_N − v_{N−1}|` and `|v_{N−1} − v_{N−2}|`
    pub last_gaps: Vec<f64>,
    pub tolerance: Vec<f64>,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassBound {
    pub sup: f64,
    pub running_max: Vec<f64>,
    pub stabilized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentTable {
    pub lambdas: Vec<f64>,
    pub probes: Vec<ProbeRecord>,
    /// `values[n][i] = Re ⟨T_{λ_n}, Φ_i⟩`
    pub values: Vec<Vec<f64>>,
    pub errors: Vec<Vec<f64>>,
    pub rtol: f64,
    pub verdicts: Vec<Verdict>,
}

impl TangentTable {
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[i]).collect()
    }

    fn slack(&self, i: usize) -> f64 {
        self.rtol * self.column(i).iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    fn verdict(&self, i: usize) -> Verdict {
        let n = self.values.len();
        let v = self.column(i);
        let e: Vec<f64> = self.errors.iter().map(|row| row[i]).collect();
        let slack = self.slack(i);
        let (mut gaps, mut tols) = (Vec::new(), Vec::new());
        for a in (n.saturating_sub(2)..n).rev().filter(|&a| a >= 1) {
            gaps.push((v[a] - v[a - 1]).abs());
            tols.push(2.0 * (e[a] + e[a - 1]) + slack);
        }
        Verdict {
            probe: self.probes[i].name.clone(),
            converged: n >= 3 && gaps.iter().zip(&tols).all(|(g, t)| g <= t),
            last_gaps: gaps,
            tolerance: tols,
            limit: v.last().copied().unwrap_or(0.0),
        }
    }

    pub fn all_converged(&self) -> bool {
        self.verdicts.iter().all(|v| v.converged)
    }

    /// Running maximum of `|row|` for probe `i`; stable when the last three entries agree
    /// within the error bars.
    pub fn mass_bound(&self, i: usize) -> MassBound {
        let v = self.column(i);
        let mut running = Vec::with_capacity(v.len());
        let mut best = 0.0f64;
        for x in &v {
            best = best.max(x.abs());
            running.push(best);
        }
        let n = running.len();
        let err = self.errors.iter().map(|row| row[i]).fold(0.0f64, f64::max);
        let stabilized = n >= 3 && running[n - 1] - running[n - 3] <= 2.0 * err + self.slack(i);
        MassBound { sup: best, running_max: running, stabilized }
    }
}

fn row_seed(seed: u64, n: usize, i: usize) -> u64 {
    seed ^ ((n as u64) << 32 | i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// `⟨(A_{λ_n})_*(τ_*T), Φ_i⟩` over the working tube for every `λ_n` and probe.
pub fn sample_tangent(
    ctx: &TangentContext,
    t: &Current,
    tau: &AdmissibleMap,
    schedule: &LambdaSchedule,
    probes: &[Probe],
) -> Result<TangentTable> {
    ctx.validate()?;
    if schedule.count == 0 || probes.is_empty() {
        return Err(LabError::Invalid("tangent sampling needs at least one λ and one probe".into()));
    }
    if t.k() != ctx.setting.k || t.l() != ctx.setting.l {
        return Err(LabError::Invalid("current and setting disagree on (k, l)".into()));
    }
    // supports of (A_λ)*Φ shrink with λ ≥ 1, so the first row is the binding one
    let lambdas = schedule.lambdas();
    if lambdas[0] < 1.0 || !(ctx.radius / lambdas[0] < tau.validity_radius()) {
        return Err(LabError::Precondition(format!(
            "probe support of fiber radius {} is not inside the validity tube (radius {}) of the map",
            ctx.radius / lambdas[0],
            tau.validity_radius()
        )));
    }
    let moved = pushforward(tau, t)?;
    let region = ctx.region();
    let rows: Vec<Vec<Estimate>> = lambdas
        .par_iter()
        .enumerate()
        .map(|(n, &lam)| {
            let tl = dilate(C64::new(lam, 0.0), &moved)?;
            probes
                .iter()
                .enumerate()
                .map(|(i, probe)| pair(&tl, &region, &probe.form, &ctx.quad.with_seed(row_seed(ctx.quad.seed, n, i))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut table = TangentTable {
        lambdas,
        probes: probes.iter().map(Probe::record).collect(),
        values: rows.iter().map(|r| r.iter().map(|e| e.value.re).collect()).collect(),
        errors: rows.iter().map(|r| r.iter().map(|e| e.error).collect()).collect(),
        rtol: ctx.rtol,
        verdicts: Vec::new(),
    };
    table.verdicts = (0..probes.len()).map(|i| table.verdict(i)).collect();
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicReport {
    pub mus: Vec<f64>,
    pub reference: Vec<f64>,
    /// `deviations[a][i]` for `μ_a` and probe `i`
    pub deviations: Vec<Vec<f64>>,
    pub eps0: f64,
    pub max_deviation: f64,
}

impl ConicReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_deviation <= tol
    }
}

/// `max |⟨(A_μ)_*T, Φ⟩ − ⟨T, Φ⟩| / (|⟨T, Φ⟩| + ε₀)` with `ε₀ = 10⁻³ max_i |⟨T, Φ_i⟩|`.
pub fn conic_check(ctx: &TangentContext, t: &Current, mus: &[f64], probes: &[Probe]) -> Result<ConicReport> {
    ctx.validate()?;
    if mus.iter().any(|m| !(*m > 0.0)) {
        return Err(LabError::ZeroLambda);
    }
    let region = ctx.region();
    let reference: Vec<f64> =
        probes.iter().map(|p| pair(t, &region, &p.form, &ctx.quad).map(|e| e.value.re)).collect::<Result<_>>()?;
    let scale = reference.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let eps0 = if scale > 0.0 { 1e-3 * scale } else { f64::MIN_POSITIVE };
    let deviations: Vec<Vec<f64>> = mus
        .par_iter()
        .map(|&mu| {
            let tm = dilate(C64::new(mu, 0.0), t)?;
            probes
                .iter()
                .zip(&reference)
                .map(|(p, r)| {
                    let v = if tm.is_zero() || mu == 1.0 { *r } else { pair(&tm, &region, &p.form, &ctx.quad)?.value.re };
                    Ok((v - r).abs() / (r.abs() + eps0))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let max_deviation = deviations.iter().flatten().fold(0.0f64, |a, d| a.max(*d));
    Ok(ConicReport { mus: mus.to_vec(), reference, deviations, eps0, max_deviation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluriharmonicReport {
    pub power: usize,
    pub probes: Vec<String>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub max_abs: f64,
    /// index of the largest pairing
    pub worst: usize,
    pub pass: bool,
}

/// Absolute floor added to `10·error` in the pluriharmonic verdict.
pub const PLURIHARMONIC_FLOOR: f64 = 1e-10;

/// `⟨T ∧ ω^power, ddᶜΨ⟩` for every `Ψ`; passes when each is within `10·error` of zero.
pub fn pluriharmonic_check(ctx: &TangentContext, t: &Current, power: usize, psis: &[Probe]) -> Result<PluriharmonicReport> {
    ctx.validate()?;
    let k = ctx.setting.k;
    let want = 2 * (k as i64 - t.p() as i64 - power as i64 - 1);
    if want < 0 {
        return Err(LabError::Invalid(format!("no test functions of complementary degree for ω^{power}")));
    }
    let region = ctx.region();
    let omega = ctx.setting.omega().power(power);
    let mut ests = Vec::with_capacity(psis.len());
    for psi in psis {
        if psi.form.degree() as i64 != want {
            return Err(LabError::ArityMismatch { expected: want as usize, got: psi.form.degree() });
        }
        let ddc = psi.form.derivative(DiffOp::Ddc);
        ests.push(if ddc.is_trivially_zero() { Estimate::zero() } else { pair(t, &region, &omega.wedge(&ddc), &ctx.quad)? });
    }
    let values: Vec<f64> = ests.iter().map(|e| e.value.re).collect();
    let errors: Vec<f64> = ests.iter().map(|e| e.error).collect();
    let worst = (0..values.len()).fold(0, |w, i| if values[i].abs() > values[w].abs() { i } else { w });
    let pass = values.iter().zip(&errors).all(|(v, e)| v.abs() <= 10.0 * e + PLURIHARMONIC_FLOOR);
    Ok(PluriharmonicReport {
        power,
        probes: psis.iter().map(|p| p.name.clone()).collect(),
        max_abs: values.get(worst).map_or(0.0, |v| v.abs()),
        worst,
        values,
        errors,
        pass,
    })
}
