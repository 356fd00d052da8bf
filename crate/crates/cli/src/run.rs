//! Executes a resolved plan and writes the report files.

use crate::config::{Assertion, ExperimentConfig, Plan, SchemaError, TaskSpec};
use lelong_core::geometry::SettingRecord;
use lelong_core::integrate::QuadratureSpec;
use lelong_core::jensen::{lj_report, lj_smooth_origin, JensenContext, JensenReport};
use lelong_core::lelong::{
    extrapolate_with_ratio, intrinsic_check, kappa_corona, kappa_eps, nu_j, nu_j_schedule, nu_point_schedule, IndicatorContext,
    LelongEstimate, RadiusSchedule, Sample,
};
use lelong_core::tangent::{conic_check, default_probes, sample_tangent, TangentContext};
use lelong_core::{LabError, C64};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub task: String,
    pub series: String,
    pub index: Option<i64>,
    /// inner radius of a corona
    pub s: Option<f64>,
    pub r: Option<f64>,
    pub eps: Option<f64>,
    pub lambda: Option<f64>,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlotPoint {
    pub r: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRecord {
    pub limit: f64,
    pub error: f64,
    pub method: String,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seeds {
    pub experiment: u64,
    pub quadrature: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub setting: SettingRecord,
    pub current: String,
    pub map: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map2: Option<String>,
    pub seeds: Seeds,
    pub budgets: QuadratureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub metric: String,
    pub value: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema: u32,
    pub task: String,
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub limits: BTreeMap<String, LimitRecord>,
    pub metrics: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub assertions: Vec<AssertionOutcome>,
    pub pass: bool,
}

impl Summary {
    pub fn failed(&self) -> Vec<&AssertionOutcome> {
        self.assertions.iter().filter(|a| !a.pass).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<Row>,
    pub plots: BTreeMap<String, Vec<PlotPoint>>,
    pub summary: Summary,
}

#[derive(Debug)]
pub enum RunError {
    Schema(SchemaError),
    Compute(LabError),
    Io(std::io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Schema(e) => write!(f, "{e}"),
            RunError::Compute(e) => write!(f, "computation failed: {e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<SchemaError> for RunError {
    fn from(e: SchemaError) -> Self {
        RunError::Schema(e)
    }
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        RunError::Compute(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.into())
    }
}

#[derive(Default)]
struct Collector {
    task: String,
    rows: Vec<Row>,
    plots: BTreeMap<String, Vec<PlotPoint>>,
    limits: BTreeMap<String, LimitRecord>,
    metrics: BTreeMap<String, f64>,
    flags: BTreeMap<String, bool>,
}

impl Collector {
    fn row(&mut self, series: &str, index: Option<i64>, value: f64, error: f64) -> &mut Row {
        self.rows.push(Row {
            task: self.task.clone(),
            series: series.into(),
            index,
            s: None,
            r: None,
            eps: None,
            lambda: None,
            value,
            error,
        });
        self.rows.last_mut().unwrap()
    }

    fn plot(&mut self, series: &str, r: f64, value: f64, error: f64) {
        self.plots.entry(series.into()).or_default().push(PlotPoint { r, value, error });
    }

    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.into(), v);
    }

    fn flag(&mut self, name: &str, v: bool) {
        self.flags.insert(name.into(), v);
    }

    fn estimate(&mut self, series: &str, e: &LelongEstimate) {
        for (n, s) in e.samples.iter().enumerate() {
            self.row(series, Some(n as i64), s.value, s.error).r = Some(s.r);
            self.plot(series, s.r, s.value, s.error);
        }
        self.limit(series, e.limit, e.error, e.method.name(), e.monotone);
        self.flag(&format!("{series}.nondecreasing"), e.nondecreasing_in_r());
    }

    fn limit(&mut self, series: &str, limit: f64, error: f64, method: &str, monotone: bool) {
        self.limits.insert(series.into(), LimitRecord { limit, error, method: method.into(), monotone });
        self.metric(&format!("{series}.limit"), limit);
        self.metric(&format!("{series}.error"), error);
        self.flag(&format!("{series}.monotone"), monotone);
    }

    fn jensen(&mut self, r: &JensenReport) {
        let terms = [
            ("mass_inner", r.mass_inner),
            ("mass_outer", r.mass_outer),
            ("lhs_mass_difference", r.lhs_mass_difference),
            ("corona_alpha_integral", r.corona_alpha_integral),
            ("ddc_double_integral_1", r.ddc_double_integral_1),
            ("ddc_double_integral_2", r.ddc_double_integral_2),
            ("vertical_term", r.vertical_term),
        ];
        for (n, (name, t)) in terms.iter().enumerate() {
            let row = self.row(&format!("jensen/{name}"), Some(n as i64), t.value, t.error);
            row.s = Some(r.radii_used.0);
            row.r = Some(r.radii_used.1);
            row.eps = r.eps;
            self.metric(&format!("jensen.{name}"), t.value);
            self.metric(&format!("jensen.{name}.error"), t.error);
        }
        self.metric("jensen.residual", r.residual);
        self.metric("jensen.residual_error", r.residual_error);
        self.metric("jensen.max_term", r.max_term());
        self.metric("jensen.relative_residual", r.residual.abs() / r.max_term().max(f64::MIN_POSITIVE));
        self.metric("jensen.r1", r.radii_used.0);
        self.metric("jensen.r2", r.radii_used.1);
        self.flag("jensen.closed", r.closed);
        self.flag("jensen.vertical_skipped", r.vertical_term_skipped());
        if let Some(x) = &r.small_radius_limit {
            self.limit("jensen.small_radius", x.limit, x.error, x.method.name(), x.monotone);
        }
    }
}

fn sched(r0: f64, count: usize, ratio: f64) -> Result<RadiusSchedule, LabError> {
    RadiusSchedule::new(r0, count)?.with_ratio(ratio)
}

fn indicator(plan: &Plan) -> IndicatorContext {
    IndicatorContext::new(plan.setting.clone(), plan.base.clone(), plan.quad).with_map(plan.map.clone())
}

fn default_js(plan: &Plan) -> Vec<i64> {
    (plan.setting.m_low() as i64..=plan.setting.m_high() as i64).collect()
}

fn execute_task(plan: &Plan, out: &mut Collector) -> Result<(), LabError> {
    let t = &plan.current;
    let top = plan.top();
    match &plan.config.task {
        TaskSpec::Point { x, radii } => {
            let x: Vec<C64> = x.as_ref().map(|v| v.iter().map(|c| c.0).collect()).unwrap_or_else(|| vec![C64::new(0.0, 0.0); plan.setting.k]);
            let e = nu_point_schedule(t, &x, &sched(radii.r0, radii.count, radii.ratio)?, &plan.quad)?;
            out.estimate("nu_point", &e);
        }
        TaskSpec::Lelong { j, radii } => {
            let cx = indicator(plan);
            let s = sched(radii.r0, radii.count, radii.ratio)?;
            for j in j.clone().unwrap_or_else(|| default_js(plan)) {
                let e = nu_j_schedule(&cx, t, j, &s)?;
                out.estimate(&format!("nu_{j}"), &e);
                if j == top {
                    out.limit("nu_top", e.limit, e.error, e.method.name(), e.monotone);
                }
            }
        }
        TaskSpec::Kappa { j, pairs } => {
            let cx = indicator(plan);
            let j = j.unwrap_or(top);
            let series = format!("kappa_{j}");
            for (n, [s, r]) in pairs.iter().enumerate() {
                let k = kappa_corona(&cx, t, j, *s, *r)?;
                let hi = nu_j(&cx, t, j, *r)?;
                let lo = nu_j(&cx, t, j, *s)?;
                let row = out.row(&series, Some(n as i64), k.value.re, k.error);
                row.s = Some(*s);
                row.r = Some(*r);
                out.plot(&series, *r, k.value.re, k.error);
                let name = format!("{series}#{n}");
                out.metric(&format!("{name}.value"), k.value.re);
                out.metric(&format!("{name}.error"), k.error);
                out.metric(&format!("{name}.gap"), (k.value.re - (hi.value.re - lo.value.re)).abs());
                out.metric(&format!("{name}.combined_error"), k.error + hi.error + lo.error);
            }
        }
        TaskSpec::KappaEps { j, r, eps } => {
            let cx = indicator(plan);
            let j = j.unwrap_or(top);
            let series = format!("kappa_eps_{j}");
            let seq = kappa_eps(&cx, t, j, *r, eps)?;
            let nu = nu_j(&cx, t, j, *r)?;
            for (n, (e, v)) in seq.iter().enumerate() {
                let row = out.row(&series, Some(n as i64), v.value.re, v.error);
                row.r = Some(*r);
                row.eps = Some(*e);
                out.plot(&series, *e, v.value.re, v.error);
            }
            out.row(&format!("nu_{j}"), None, nu.value.re, nu.error).r = Some(*r);
            out.metric(&format!("nu_{j}.at_r"), nu.value.re);
            out.metric(&format!("nu_{j}.at_r_error"), nu.error);
            let (e, last) = seq.last().unwrap();
            out.metric(&format!("{series}.last"), last.value.re);
            out.metric(&format!("{series}.last_eps"), *e);
            out.metric(&format!("{series}.last_gap"), (last.value.re - nu.value.re).abs());
            let mut samples: Vec<Sample> = seq.iter().map(|(e, v)| Sample { r: *e, value: v.value.re, error: v.error }).collect();
            samples.sort_by(|a, b| b.r.total_cmp(&a.r));
            if samples.len() >= 4 {
                let x = extrapolate_with_ratio(&samples, samples[0].r / samples[1].r)?;
                out.limit(&series, x.limit, x.error, x.method.name(), x.monotone);
                out.metric(&format!("{series}.limit_gap"), (x.limit - nu.value.re).abs());
                out.metric(&format!("{series}.combined_error"), x.error + nu.error);
            }
        }
        TaskSpec::Jensen { r1, r2, jitter } => {
            let form = t.as_form().ok_or_else(|| LabError::UnsupportedKind(t.tag().into()))?;
            let mut cx = JensenContext::new(plan.setting.clone(), plan.base.clone(), plan.quad);
            if *jitter {
                cx = cx.with_jitter(plan.config.seed);
            }
            out.jensen(&lj_report(&cx, &form, *r1, *r2)?);
        }
        TaskSpec::JensenSmooth { r } => {
            let form = t.as_form().ok_or_else(|| LabError::UnsupportedKind(t.tag().into()))?;
            let cx = JensenContext::new(plan.setting.clone(), plan.base.clone(), plan.quad);
            out.jensen(&lj_smooth_origin(&cx, &form, *r)?);
        }
        TaskSpec::Tangent { radius, lambdas, probes, rtol } => {
            let mut cx = TangentContext::new(plan.setting.clone(), plan.base.clone(), *radius, plan.quad);
            if let Some(rt) = rtol {
                cx = cx.with_rtol(*rt);
            }
            let mut dict = default_probes(&cx, plan.setting.p)?;
            dict.truncate(*probes);
            let table = sample_tangent(&cx, t, &plan.map, lambdas, &dict)?;
            for (i, probe) in table.probes.iter().enumerate() {
                let series = format!("tangent/{}", probe.name);
                for (n, lam) in table.lambdas.iter().enumerate() {
                    let (v, e) = (table.values[n][i], table.errors[n][i]);
                    let row = out.row(&series, Some(n as i64), v, e);
                    row.lambda = Some(*lam);
                    row.r = Some(radius / lam);
                    out.plot(&series, radius / lam, v, e);
                }
                let verdict = &table.verdicts[i];
                out.metric(&format!("{series}.limit"), verdict.limit);
                out.flag(&format!("{series}.converged"), verdict.converged);
            }
            let mass = table.mass_bound(0);
            out.metric("tangent.mass_sup", mass.sup);
            out.flag("tangent.mass_stabilized", mass.stabilized);
            out.flag("tangent.all_converged", table.all_converged());
        }
        TaskSpec::Conic { radius, mus, probes } => {
            let cx = TangentContext::new(plan.setting.clone(), plan.base.clone(), *radius, plan.quad);
            let mut dict = default_probes(&cx, plan.setting.p)?;
            dict.truncate(*probes);
            let rep = conic_check(&cx, t, mus, &dict)?;
            for (i, probe) in dict.iter().enumerate() {
                let series = format!("conic/{}", probe.name);
                out.row(&series, None, rep.reference[i], 0.0).lambda = Some(1.0);
                for (a, mu) in rep.mus.iter().enumerate() {
                    out.row(&series, Some(a as i64), rep.deviations[a][i], 0.0).lambda = Some(*mu);
                    out.plot(&series, *mu, rep.deviations[a][i], 0.0);
                }
            }
            out.metric("conic.max_deviation", rep.max_deviation);
            out.metric("conic.eps0", rep.eps0);
        }
        TaskSpec::Intrinsic { j, radii } => {
            let s = sched(radii.r0, radii.count, radii.ratio)?;
            let js = j.clone().unwrap_or_else(|| vec![top]);
            let maps = (&plan.map, plan.map2.as_ref().expect("checked at resolve"));
            for row in intrinsic_check(t, &plan.setting, &plan.base, maps, &js, &s, &plan.quad)? {
                let name = format!("intrinsic_{}", row.j);
                out.estimate(&format!("{name}/first"), &row.first);
                out.estimate(&format!("{name}/second"), &row.second);
                out.metric(&format!("{name}.difference"), row.difference);
                out.metric(&format!("{name}.combined_error"), row.combined_error);
                out.flag(&format!("{name}.agree"), row.difference <= 2.0 * row.combined_error + 1e-12);
            }
        }
        TaskSpec::Sweep { j, r0, count, ratio } => {
            let cx = indicator(plan);
            let j = j.unwrap_or(top);
            let series = format!("sweep_{j}");
            let mut limits = Vec::new();
            for (n, r) in r0.iter().enumerate() {
                let e = nu_j_schedule(&cx, t, j, &sched(*r, *count, *ratio)?)?;
                out.estimate(&format!("{series}@{n}"), &e);
                let row = out.row(&series, Some(n as i64), e.limit, e.error);
                row.r = Some(*r);
                out.plot(&series, *r, e.limit, e.error);
                limits.push((e.limit, e.error));
            }
            let lo = limits.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
            let hi = limits.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
            out.metric(&format!("{series}.spread"), hi - lo);
            out.metric(&format!("{series}.max_error"), limits.iter().map(|x| x.1).fold(0.0, f64::max));
        }
    }
    Ok(())
}

fn check(a: &Assertion, v: f64, metrics: &BTreeMap<String, f64>) -> (bool, String) {
    let mut pass = v.is_finite();
    let mut detail = vec![format!("value {v:e}")];
    if let Some(want) = a.approx {
        let tol = a.abs_tol.unwrap_or(0.0) + a.rel_tol.unwrap_or(0.0) * want.abs();
        pass &= (v - want).abs() <= tol;
        detail.push(format!("|value - {want:e}| = {:e} vs tol {tol:e}", (v - want).abs()));
    }
    if let Some(lo) = a.min {
        pass &= v >= lo;
        detail.push(format!("min {lo:e}"));
    }
    if let Some(hi) = a.max {
        pass &= v <= hi;
        detail.push(format!("max {hi:e}"));
    }
    if a.zero_within_error {
        let key = format!("{}.error", a.metric.trim_end_matches(".limit"));
        let err = metrics.get(&key).copied().unwrap_or(f64::NAN);
        pass &= v.abs() <= err;
        detail.push(format!("error bar {err:e}"));
    }
    (pass, detail.join("; "))
}

/// Runs the plan in memory.
pub fn execute(plan: &Plan) -> Result<RunOutput, RunError> {
    let mut out = Collector { task: plan.config.task.name().into(), ..Default::default() };
    execute_task(plan, &mut out)?;
    let mut assertions = Vec::new();
    for (i, a) in plan.config.assertions.iter().enumerate() {
        let v = match (out.metrics.get(&a.metric), out.flags.get(&a.metric)) {
            (Some(v), _) => *v,
            (None, Some(f)) => f64::from(u8::from(*f)),
            (None, None) => {
                let known: Vec<&str> = out.metrics.keys().chain(out.flags.keys()).map(|s| s.as_str()).collect();
                return Err(SchemaError::new(
                    format!("assertions[{i}].metric"),
                    format!("`{}` is not reported by this task; reported: {}", a.metric, known.join(", ")),
                )
                .into());
            }
        };
        let (pass, detail) = check(a, v, &out.metrics);
        assertions.push(AssertionOutcome { name: a.label(), metric: a.metric.clone(), value: v, pass, detail });
    }
    let summary = Summary {
        schema: crate::config::SCHEMA_VERSION,
        task: out.task.clone(),
        config: plan.config.clone(),
        provenance: provenance(plan),
        pass: assertions.iter().all(|a| a.pass),
        assertions,
        limits: out.limits,
        metrics: out.metrics,
        flags: out.flags,
    };
    Ok(RunOutput { rows: out.rows, plots: out.plots, summary })
}

pub fn provenance(plan: &Plan) -> Provenance {
    Provenance {
        tool: format!("lelong-lab {}", env!("CARGO_PKG_VERSION")),
        setting: plan.setting.record(),
        current: plan.current.tag().into(),
        map: plan.map.tag().into(),
        map2: plan.map2.as_ref().map(|m| m.tag().into()),
        seeds: Seeds { experiment: plan.config.seed, quadrature: plan.quad.seed },
        budgets: plan.quad,
    }
}

impl RunOutput {
    pub fn results_csv(&self) -> Result<String, RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn plot_csv(points: &[PlotPoint]) -> Result<String, RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in points {
            w.serialize(p)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Writes `results.csv`, `summary.json` and `plotdata/*.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
        fs::create_dir_all(dir)?;
        let plots = dir.join("plotdata");
        if plots.is_dir() {
            fs::remove_dir_all(&plots)?;
        }
        fs::create_dir_all(&plots)?;
        let mut written = vec![dir.join("results.csv"), dir.join("summary.json")];
        fs::write(&written[0], self.results_csv()?)?;
        fs::write(&written[1], self.summary_json())?;
        for (name, pts) in &self.plots {
            let path = plots.join(format!("{}.csv", file_stem(name)));
            fs::write(&path, Self::plot_csv(pts)?)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn file_stem(series: &str) -> String {
    series.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// The resolved plan as printed by `--dry-run`.
pub fn describe(plan: &Plan, dir: &Path) -> serde_json::Value {
    let js = match &plan.config.task {
        TaskSpec::Lelong { j, .. } => Some(j.clone().unwrap_or_else(|| default_js(plan))),
        TaskSpec::Intrinsic { j, .. } => Some(j.clone().unwrap_or_else(|| vec![plan.top()])),
        TaskSpec::Kappa { j, .. } | TaskSpec::KappaEps { j, .. } | TaskSpec::Sweep { j, .. } => Some(vec![j.unwrap_or(plan.top())]),
        _ => None,
    };
    serde_json::json!({
        "task": plan.config.task,
        "indices": js,
        "top_index": plan.top(),
        "provenance": provenance(plan),
        "base": format!("{:?}", plan.base),
        "assertions": plan.config.assertions.iter().map(|a| a.label()).collect::<Vec<_>>(),
        "outputs": {
            "results": dir.join("results.csv"),
            "summary": dir.join("summary.json"),
            "plotdata": dir.join("plotdata"),
        },
    })
}
