use lelong_lab::config::{parse, Plan};
use lelong_lab::run::RunOutput;
use lelong_lab::execute;
use serde_json::{json, Value};

fn cfg(setting: Value, current: Value, task: Value) -> Value {
    json!({
        "schema": 1,
        "seed": 5,
        "setting": setting,
        "current": current,
        "task": task,
        "quadrature": {"method": "tensor_polar", "panels": 5, "radial": 5, "angular": 0, "base": 6}
    })
}

fn go(v: &Value) -> RunOutput {
    let plan = Plan::resolve(parse(&v.to_string()).unwrap()).unwrap();
    execute(&plan).unwrap()
}

fn metric(o: &RunOutput, name: &str) -> f64 {
    *o.summary.metrics.get(name).unwrap_or_else(|| panic!("no metric {name}: {:?}", o.summary.metrics.keys()))
}

fn flag(o: &RunOutput, name: &str) -> bool {
    *o.summary.flags.get(name).unwrap_or_else(|| panic!("no flag {name}: {:?}", o.summary.flags.keys()))
}

fn k3() -> Value {
    json!({"k": 3, "l": 1, "p": 1})
}

fn alpha() -> Value {
    json!({"kind": "alpha_power", "q": 1})
}

fn tilted() -> Value {
    json!({"kind": "integration_linear", "basis": [[1, 0, 1], [0, 1, 0]]})
}

#[test]
fn point_task() {
    // α∧β has mass 4r² on the ball, so ν = 2 at every radius
    let o = go(&cfg(json!({"k": 2, "l": 0, "p": 1}), alpha(), json!({"kind": "point", "radii": {"r0": 0.4, "count": 4}})));
    assert!((metric(&o, "nu_point.limit") - 2.0).abs() < 1e-8);
    assert_eq!(o.rows.len(), 4);
    assert_eq!(o.plots["nu_point"].len(), 4);
}

#[test]
fn lelong_task_on_a_tilted_plane() {
    // ν_0(r) = 4 and ν_1(r) = 2r²
    let o = go(&cfg(k3(), tilted(), json!({"kind": "lelong", "radii": {"r0": 0.5, "count": 4}})));
    assert!((metric(&o, "nu_0.limit") - 4.0).abs() < 1e-10);
    assert!(metric(&o, "nu_1.limit").abs() <= metric(&o, "nu_1.error") + 1e-12);
    assert_eq!(o.summary.limits["nu_top"], o.summary.limits["nu_1"]);
    for row in o.rows.iter().filter(|r| r.series == "nu_1") {
        let r = row.r.unwrap();
        assert!((row.value - 2.0 * r * r).abs() < 1e-12, "{row:?}");
    }
    assert!(flag(&o, "nu_1.nondecreasing"));
}

#[test]
fn kappa_tasks() {
    let o = go(&cfg(k3(), tilted(), json!({"kind": "kappa", "pairs": [[0.1, 0.4], [0.2, 0.2]]})));
    // κ_1 = 2(r² − s²)
    assert!((metric(&o, "kappa_1#0.value") - 2.0 * (0.16 - 0.01)).abs() < 1e-12);
    assert!(metric(&o, "kappa_1#0.gap") <= metric(&o, "kappa_1#0.combined_error") + 1e-12);
    assert!(metric(&o, "kappa_1#1.value").abs() < 1e-14);

    let r = 0.4;
    let eps = [r / 2.0, r / 4.0, r / 8.0, r / 16.0];
    let o = go(&cfg(k3(), alpha(), json!({"kind": "kappa_eps", "r": r, "eps": eps})));
    for row in o.rows.iter().filter(|x| x.series == "kappa_eps_1") {
        let e = row.eps.unwrap();
        let want = 8.0 * r * r / (r * r + e * e);
        assert!((row.value - want).abs() < 1e-6 * want, "{row:?}");
    }
    assert!(metric(&o, "kappa_eps_1.limit_gap") <= metric(&o, "kappa_eps_1.combined_error"));
}

#[test]
fn jensen_tasks() {
    let s = json!({"k": 2, "l": 1, "p": 1});
    let o = go(&cfg(s.clone(), json!({"kind": "smooth", "catalog": "radial"}), json!({"kind": "jensen", "r1": 0.25, "r2": 0.5})));
    assert!(metric(&o, "jensen.relative_residual") <= 1e-3);
    assert!(!flag(&o, "jensen.closed"));
    assert!(flag(&o, "jensen.vertical_skipped"));
    // the normalized mass of (1 + |z|²)ω at radius a is 4 + 2a²
    assert!((metric(&o, "jensen.mass_inner") - (4.0 + 2.0 * 0.0625)).abs() < 1e-9);

    let o = go(&cfg(s.clone(), json!({"kind": "smooth", "catalog": "omega-w"}), json!({"kind": "jensen", "r1": 0.25, "r2": 0.5, "jitter": true})));
    assert!(flag(&o, "jensen.closed"));
    assert!(metric(&o, "jensen.r1") != 0.25 && (metric(&o, "jensen.r1") / 0.25 - 1.0).abs() < 0.01);

    let o = go(&cfg(s, json!({"kind": "smooth", "catalog": "radial"}), json!({"kind": "jensen_smooth", "r": 0.4})));
    assert!(metric(&o, "jensen.relative_residual") <= 1e-3);
    assert!((metric(&o, "jensen.small_radius.limit") - 4.0).abs() < 1e-6);

    let bad = cfg(k3(), tilted(), json!({"kind": "jensen", "r1": 0.25, "r2": 0.5}));
    let e = Plan::resolve(parse(&bad.to_string()).unwrap()).unwrap_err();
    assert_eq!(e.field, "current");
}

#[test]
fn tangent_and_conic_tasks() {
    let s = json!({"k": 2, "l": 0, "p": 1});
    let o = go(&cfg(s.clone(), alpha(), json!({"kind": "tangent", "radius": 0.5, "lambdas": {"first": 0, "count": 3}, "probes": 4})));
    assert!(flag(&o, "tangent.all_converged"));
    assert_eq!(o.rows.len(), 12);
    let mass: Vec<f64> = o.rows.iter().filter(|r| r.series == "tangent/mass").map(|r| r.value).collect();
    assert!(mass.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-12 * w[0].abs()), "{mass:?}");

    let o = go(&cfg(s.clone(), alpha(), json!({"kind": "conic", "radius": 0.5, "mus": [0.5, 2.0], "probes": 6})));
    assert!(metric(&o, "conic.max_deviation") < 1e-10);
    let o = go(&cfg(s, json!({"kind": "smooth", "catalog": "beta"}), json!({"kind": "conic", "radius": 0.5, "mus": [2.0], "probes": 6})));
    assert!(metric(&o, "conic.max_deviation") > 0.1);
}

#[test]
fn intrinsic_task_needs_a_second_map() {
    let mut v = cfg(json!({"k": 2, "l": 1, "p": 1}), alpha(), json!({"kind": "intrinsic", "radii": {"r0": 0.2, "count": 4}}));
    let e = Plan::resolve(parse(&v.to_string()).unwrap()).unwrap_err();
    assert_eq!(e.field, "map2");
    v["map2"] = json!({"kind": "strongly_admissible", "A": [[0.2]], "B": [[0.1]]});
    let o = go(&v);
    assert!(flag(&o, "intrinsic_1.agree"));
    assert!((o.summary.limits["intrinsic_1/second"].limit - 4.0).abs() < 1e-8);
    assert_eq!(o.summary.provenance.map2.as_deref(), Some("strongly-admissible"));
}

#[test]
fn sweep_task() {
    let o = go(&cfg(k3(), tilted(), json!({"kind": "sweep", "j": 0, "r0": [0.5, 0.25], "count": 4})));
    assert!(metric(&o, "sweep_0.spread") < 1e-10);
    assert_eq!(o.plots["sweep_0"].len(), 2);
    assert!(o.plots.contains_key("sweep_0@1"));
}

#[test]
fn composite_current_specs() {
    // ddᶜ(‖z‖²α) = β∧α, so its top number vanishes
    let ddc = json!({"kind": "ddc", "of": {"kind": "psh_log_norm", "e": 1, "a": 0, "b": 1}});
    let o = go(&cfg(json!({"k": 3, "l": 1, "p": 2}), ddc, json!({"kind": "lelong", "radii": {"r0": 0.4, "count": 4}})));
    assert!(metric(&o, "nu_top.limit").abs() <= metric(&o, "nu_top.error"));
    assert_eq!(o.summary.provenance.setting.p, 2);

    let dilated = json!({"kind": "dilated", "lambda": [0, 2], "of": tilted()});
    let o = go(&cfg(k3(), dilated, json!({"kind": "lelong", "j": [0], "radii": {"r0": 0.5, "count": 4}})));
    assert!((metric(&o, "nu_0.limit") - 4.0).abs() < 1e-10);
}

#[test]
fn config_echo_round_trips() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/alpha_power_top.json")).unwrap();
    let a = parse(&text).unwrap();
    let b = parse(&serde_json::to_string(&a).unwrap()).unwrap();
    assert_eq!(a, b);
    let summary = json!({"provenance": {}, "config": serde_json::to_value(&a).unwrap()});
    assert_eq!(parse(&summary.to_string()).unwrap(), a);
    assert_eq!(parse(r#"{"provenance": {}}"#).unwrap_err().field, "config");
}
