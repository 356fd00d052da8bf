//! Experiment configuration, schema version 1.

use crate::catalog;
use lelong_core::currents::{ddc_of, dilate, pushforward, Current, PshData};
use lelong_core::forms::Polynomial;
use lelong_core::geometry::{BaseDomain, LocalSetting, Metric, OmegaSpec};
use lelong_core::integrate::QuadratureSpec;
use lelong_core::lelong::{top_index, RadiusSchedule};
use lelong_core::maps::AdmissibleMap;
use lelong_core::tangent::LambdaSchedule;
use lelong_core::C64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

pub const SCHEMA_VERSION: u32 = 1;

/// A complex number written as `x` or `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cx(pub C64);

impl Serialize for Cx {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.im == 0.0 {
            s.serialize_f64(self.0.re)
        } else {
            [self.0.re, self.0.im].serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for Cx {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Real(f64),
            Pair([f64; 2]),
        }
        match Raw::deserialize(d).map_err(|_| serde::de::Error::custom("expected a number or [re, im]"))? {
            Raw::Real(x) => Ok(Cx(C64::new(x, 0.0))),
            Raw::Pair([a, b]) => Ok(Cx(C64::new(a, b))),
        }
    }
}

fn cvec(v: &[Cx]) -> Vec<C64> {
    v.iter().map(|c| c.0).collect()
}

fn cmat(m: &[Vec<Cx>]) -> Vec<Vec<C64>> {
    m.iter().map(|r| cvec(r)).collect()
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn twelve() -> usize {
    12
}

fn standard_omega() -> OmegaSpec {
    OmegaSpec::Standard
}

fn is_standard(o: &OmegaSpec) -> bool {
    *o == OmegaSpec::Standard
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpec {
    #[default]
    Identity,
    /// `diag(1 + |w_1|², 1, …)`
    BumpFirst,
    Constant(Vec<Vec<Cx>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingSpec {
    pub k: usize,
    pub l: usize,
    pub p: usize,
    #[serde(default)]
    pub metric: MetricSpec,
    #[serde(default = "standard_omega", skip_serializing_if = "is_standard")]
    pub omega: OmegaSpec,
    #[serde(default = "one")]
    pub rbar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSpec {
    Ball {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<Cx>>,
        radius: f64,
    },
    Polydisc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<Cx>>,
        radii: Vec<f64>,
    },
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurrentSpec {
    Zero,
    AlphaPower {
        q: usize,
    },
    IntegrationLinear {
        basis: Vec<Vec<Cx>>,
    },
    /// `‖z‖^{2e} (ddᶜ‖z‖²)^a ∧ (ddᶜ log‖z‖²)^b` in the fiber coordinates
    PshLogNorm {
        e: usize,
        a: usize,
        b: usize,
    },
    Smooth {
        catalog: String,
        /// defaults to the experiment seed
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Ddc {
        of: Box<CurrentSpec>,
    },
    Dilated {
        lambda: Cx,
        of: Box<CurrentSpec>,
    },
    Pushforward {
        map: MapSpec,
        of: Box<CurrentSpec>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    #[default]
    Identity,
    Dilation {
        lambda: Cx,
    },
    StronglyAdmissible {
        #[serde(rename = "A")]
        a: Vec<Vec<Cx>>,
        #[serde(rename = "B")]
        b: Vec<Vec<Cx>>,
    },
    /// applied last to first
    Composite {
        maps: Vec<MapSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiiSpec {
    pub r0: f64,
    pub count: usize,
    #[serde(default = "two")]
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Point {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x: Option<Vec<Cx>>,
        radii: RadiiSpec,
    },
    Lelong {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        j: Option<Vec<i64>>,
        radii: RadiiSpec,
    },
    Kappa {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        j: Option<i64>,
        pairs: Vec<[f64; 2]>,
    },
    KappaEps {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        j: Option<i64>,
        r: f64,
        eps: Vec<f64>,
    },
    Jensen {
        r1: f64,
        r2: f64,
        #[serde(default)]
        jitter: bool,
    },
    JensenSmooth {
        r: f64,
    },
    Tangent {
        radius: f64,
        lambdas: LambdaSchedule,
        #[serde(default = "twelve")]
        probes: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rtol: Option<f64>,
    },
    Conic {
        radius: f64,
        mus: Vec<f64>,
        #[serde(default = "twelve")]
        probes: usize,
    },
    Intrinsic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        j: Option<Vec<i64>>,
        radii: RadiiSpec,
    },
    /// extrapolated `ν_j` for several starting radii
    Sweep {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        j: Option<i64>,
        r0: Vec<f64>,
        count: usize,
        #[serde(default = "two")]
        ratio: f64,
    },
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Point { .. } => "point",
            TaskSpec::Lelong { .. } => "lelong",
            TaskSpec::Kappa { .. } => "kappa",
            TaskSpec::KappaEps { .. } => "kappa_eps",
            TaskSpec::Jensen { .. } => "jensen",
            TaskSpec::JensenSmooth { .. } => "jensen_smooth",
            TaskSpec::Tangent { .. } => "tangent",
            TaskSpec::Conic { .. } => "conic",
            TaskSpec::Intrinsic { .. } => "intrinsic",
            TaskSpec::Sweep { .. } => "sweep",
        }
    }
}

/// A check on one reported metric. Flags read as 1 (true) or 0 (false).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub metric: String,
    /// `|v − approx| ≤ abs_tol + rel_tol·|approx|`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// `|X.limit| ≤ X.error`
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_within_error: bool,
}

impl Assertion {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.metric.clone())
    }
}

fn default_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub setting: SettingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseSpec>,
    pub current: CurrentSpec,
    #[serde(default)]
    pub map: MapSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map2: Option<MapSpec>,
    pub task: TaskSpec,
    /// the seed field is replaced by the experiment seed
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    pub field: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema error in `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for SchemaError {}

/// Parses a config, or the `config` echo inside a `summary.json`.
pub fn parse(text: &str) -> Result<ExperimentConfig, SchemaError> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| SchemaError::new("(document)", format!("not valid JSON: {e}")))?;
    if let Some(obj) = value.as_object_mut() {
        if obj.contains_key("provenance") {
            value = obj.remove("config").ok_or_else(|| SchemaError::new("config", "summary without a config echo"))?;
        }
    }
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "(top level)".to_string() } else { path };
        SchemaError::new(field, e.into_inner().to_string())
    })?;
    if cfg.schema != SCHEMA_VERSION {
        return Err(SchemaError::new("schema", format!("unsupported version {}; expected {SCHEMA_VERSION}", cfg.schema)));
    }
    Ok(cfg)
}

/// A config with every name resolved into library objects.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: ExperimentConfig,
    pub setting: LocalSetting,
    pub base: BaseDomain,
    pub current: Current,
    pub map: AdmissibleMap,
    pub map2: Option<AdmissibleMap>,
    pub quad: QuadratureSpec,
}

fn positive(field: &str, x: f64) -> Result<(), SchemaError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(SchemaError::new(field, format!("must be positive and finite, got {x}")))
    }
}

fn radii(field: &str, r: &RadiiSpec) -> Result<RadiusSchedule, SchemaError> {
    RadiusSchedule::new(r.r0, r.count)
        .and_then(|s| s.with_ratio(r.ratio))
        .map_err(|e| SchemaError::new(field, e.to_string()))
}

impl Plan {
    pub fn resolve(config: ExperimentConfig) -> Result<Self, SchemaError> {
        let s = &config.setting;
        if s.l >= s.k {
            return Err(SchemaError::new("setting.l", format!("need l < k, got k={}, l={}", s.k, s.l)));
        }
        let metric = match &s.metric {
            MetricSpec::Identity => Metric::Identity,
            MetricSpec::BumpFirst => Metric::bump_first(s.k, s.l),
            MetricSpec::Constant(a) => Metric::Constant(cmat(a)),
        };
        let setting = LocalSetting::build(s.k, s.l, s.p, metric, s.omega.clone(), s.rbar)
            .map_err(|e| SchemaError::new("setting", e.to_string()))?;
        let (k, l) = (setting.k, setting.l);
        let base = match &config.base {
            None if l == 0 => BaseDomain::Point,
            None => BaseDomain::Ball { center: vec![C64::new(0.0, 0.0); l], radius: 1.0 },
            Some(BaseSpec::Point) => BaseDomain::Point,
            Some(BaseSpec::Ball { center, radius }) => BaseDomain::Ball {
                center: center.as_deref().map(cvec).unwrap_or_else(|| vec![C64::new(0.0, 0.0); l]),
                radius: *radius,
            },
            Some(BaseSpec::Polydisc { center, radii }) => BaseDomain::Polydisc {
                center: center.as_deref().map(cvec).unwrap_or_else(|| vec![C64::new(0.0, 0.0); l]),
                radii: radii.clone(),
            },
        };
        base.validate(l).map_err(|e| SchemaError::new("base", e.to_string()))?;
        let current = build_current(&config.current, &setting, config.seed, "current")?;
        if current.p() != setting.p {
            return Err(SchemaError::new(
                "current",
                format!("current has bidegree ({0},{0}) but setting.p = {1}", current.p(), setting.p),
            ));
        }
        let map = build_map(&config.map, k, l, "map")?;
        let map2 = config.map2.as_ref().map(|m| build_map(m, k, l, "map2")).transpose()?;
        let mut quad = config.quadrature;
        quad.seed = config.seed;
        quad.validate().map_err(|e| SchemaError::new("quadrature", e.to_string()))?;
        let plan = Plan { setting, base, current, map, map2, quad, config };
        plan.check_task()?;
        plan.check_assertions()?;
        Ok(plan)
    }

    pub fn top(&self) -> i64 {
        top_index(&self.setting)
    }

    fn check_task(&self) -> Result<(), SchemaError> {
        let (lo, hi) = (self.setting.m_low() as i64, self.setting.m_high() as i64);
        let js = |field: &str, j: &[i64]| -> Result<(), SchemaError> {
            if j.is_empty() {
                return Err(SchemaError::new(field, "needs at least one index"));
            }
            match j.iter().find(|j| **j < 0 || **j > self.setting.l as i64) {
                Some(bad) => Err(SchemaError::new(field, format!("index {bad} outside 0..={} ({lo}..={hi} carry mass)", self.setting.l))),
                None => Ok(()),
            }
        };
        let smooth = || -> Result<(), SchemaError> {
            if self.setting.l == 0 {
                return Err(SchemaError::new("setting.l", "Lelong-Jensen tasks need l >= 1"));
            }
            self.current.as_form().map(|_| ()).ok_or_else(|| SchemaError::new("current", "Lelong-Jensen tasks need a smooth current"))
        };
        match &self.config.task {
            TaskSpec::Point { x, radii: r } => {
                radii("task.radii", r)?;
                if let Some(x) = x {
                    if x.len() != self.setting.k {
                        return Err(SchemaError::new("task.x", format!("needs {} coordinates", self.setting.k)));
                    }
                }
            }
            TaskSpec::Lelong { j, radii: r } | TaskSpec::Intrinsic { j, radii: r } => {
                radii("task.radii", r)?;
                if let Some(j) = j {
                    js("task.j", j)?;
                }
                if matches!(self.config.task, TaskSpec::Intrinsic { .. }) && self.map2.is_none() {
                    return Err(SchemaError::new("map2", "the intrinsic task compares `map` with `map2`"));
                }
            }
            TaskSpec::Kappa { j, pairs } => {
                if let Some(j) = j {
                    js("task.j", &[*j])?;
                }
                if pairs.is_empty() {
                    return Err(SchemaError::new("task.pairs", "needs at least one [s, r] pair"));
                }
                for [s, r] in pairs {
                    positive("task.pairs", *s)?;
                    if !(s <= r) {
                        return Err(SchemaError::new("task.pairs", format!("need s <= r, got [{s}, {r}]")));
                    }
                }
            }
            TaskSpec::KappaEps { j, r, eps } => {
                if let Some(j) = j {
                    js("task.j", &[*j])?;
                }
                positive("task.r", *r)?;
                if eps.is_empty() {
                    return Err(SchemaError::new("task.eps", "needs at least one scale"));
                }
                for e in eps {
                    positive("task.eps", *e)?;
                }
            }
            TaskSpec::Jensen { r1, r2, .. } => {
                smooth()?;
                positive("task.r1", *r1)?;
                if !(r1 < r2) {
                    return Err(SchemaError::new("task.r2", "needs r1 < r2"));
                }
            }
            TaskSpec::JensenSmooth { r } => {
                smooth()?;
                positive("task.r", *r)?;
            }
            TaskSpec::Tangent { radius, lambdas, probes, rtol } => {
                positive("task.radius", *radius)?;
                if lambdas.count == 0 {
                    return Err(SchemaError::new("task.lambdas.count", "must be positive"));
                }
                if *probes == 0 {
                    return Err(SchemaError::new("task.probes", "must be positive"));
                }
                if let Some(t) = rtol {
                    positive("task.rtol", *t)?;
                }
            }
            TaskSpec::Conic { radius, mus, probes } => {
                positive("task.radius", *radius)?;
                if mus.is_empty() {
                    return Err(SchemaError::new("task.mus", "needs at least one scale"));
                }
                for m in mus {
                    positive("task.mus", *m)?;
                }
                if *probes == 0 {
                    return Err(SchemaError::new("task.probes", "must be positive"));
                }
            }
            TaskSpec::Sweep { j, r0, count, ratio } => {
                if let Some(j) = j {
                    js("task.j", &[*j])?;
                }
                if r0.is_empty() {
                    return Err(SchemaError::new("task.r0", "needs at least one starting radius"));
                }
                for r in r0 {
                    radii("task.r0", &RadiiSpec { r0: *r, count: *count, ratio: *ratio })?;
                }
            }
        }
        Ok(())
    }

    fn check_assertions(&self) -> Result<(), SchemaError> {
        for (i, a) in self.config.assertions.iter().enumerate() {
            let field = format!("assertions[{i}]");
            if a.approx.is_none() && a.min.is_none() && a.max.is_none() && !a.zero_within_error {
                return Err(SchemaError::new(field, "needs one of approx, min, max, zero_within_error"));
            }
            if a.approx.is_some() && a.rel_tol.is_none() && a.abs_tol.is_none() {
                return Err(SchemaError::new(field, "approx needs rel_tol or abs_tol"));
            }
            if a.approx.is_none() && (a.rel_tol.is_some() || a.abs_tol.is_some()) {
                return Err(SchemaError::new(field, "rel_tol and abs_tol apply to approx"));
            }
            if a.zero_within_error && !a.metric.ends_with(".limit") {
                return Err(SchemaError::new(format!("{field}.metric"), "zero_within_error needs a `.limit` metric"));
            }
        }
        Ok(())
    }
}

fn build_map(spec: &MapSpec, k: usize, l: usize, field: &str) -> Result<AdmissibleMap, SchemaError> {
    let err = |e: lelong_core::LabError| SchemaError::new(field, e.to_string());
    match spec {
        MapSpec::Identity => Ok(AdmissibleMap::identity(k, l)),
        MapSpec::Dilation { lambda } => AdmissibleMap::dilation(k, l, lambda.0).map_err(err),
        MapSpec::StronglyAdmissible { a, b } => AdmissibleMap::strongly_admissible(k, l, &cmat(a), &cmat(b)).map_err(err),
        MapSpec::Composite { maps } => {
            let inner = maps
                .iter()
                .enumerate()
                .map(|(i, m)| build_map(m, k, l, &format!("{field}.maps[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            AdmissibleMap::composite(inner).map_err(err)
        }
    }
}

fn build_current(spec: &CurrentSpec, setting: &LocalSetting, seed: u64, field: &str) -> Result<Current, SchemaError> {
    let (k, l) = (setting.k, setting.l);
    let err = |e: lelong_core::LabError| SchemaError::new(field, e.to_string());
    let of = format!("{field}.of");
    match spec {
        CurrentSpec::Zero => Ok(Current::zero(k, l, setting.p)),
        CurrentSpec::AlphaPower { q } => Current::alpha_power(k, l, *q).map_err(err),
        CurrentSpec::IntegrationLinear { basis } => Current::integration_linear(k, l, &cmat(basis)).map_err(err),
        CurrentSpec::PshLogNorm { e, a, b } => {
            let f = (0..k - l).map(|i| Polynomial::var(k, i)).collect();
            Current::psh_log_norm(k, l, PshData { f, e: *e, a: *a, b: *b, singular_weight: 0.0 }).map_err(err)
        }
        CurrentSpec::Smooth { catalog: name, seed: s } => {
            let form = catalog::smooth_form(setting, name, s.unwrap_or(seed)).ok_or_else(|| {
                SchemaError::new(
                    format!("{field}.catalog"),
                    format!("unknown smooth form `{name}` for this setting; known: {}", catalog::SMOOTH_NAMES.join(", ")),
                )
            })?;
            Current::smooth(l, form).map_err(err)
        }
        CurrentSpec::Ddc { of: inner } => ddc_of(&build_current(inner, setting, seed, &of)?).map_err(err),
        CurrentSpec::Dilated { lambda, of: inner } => dilate(lambda.0, &build_current(inner, setting, seed, &of)?).map_err(err),
        CurrentSpec::Pushforward { map, of: inner } => {
            let m = build_map(map, k, l, &format!("{field}.map"))?;
            pushforward(&m, &build_current(inner, setting, seed, &of)?).map_err(err)
        }
    }
}
