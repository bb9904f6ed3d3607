use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_voltvar"));
    cmd.env_remove("VOLTVAR_WORKERS");
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn assert_schema(value: &Value, name: &str) {
    let schema = read_json(schema_dir().join(format!("{name}.schema.json")));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn csv_rows(path: impl AsRef<Path>) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .collect::<Result<_, _>>()
        .unwrap()
}

fn csv_header(path: impl AsRef<Path>) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

const TOY_FEEDER: &str = r#"{
  "v0": 1.0,
  "buses": [
    {"id": 1, "parent": 0, "r": 1.0, "x": 1.0},
    {"id": 2, "parent": 1, "r": 1.0, "x": 1.0}
  ],
  "inverters": [1, 2],
  "q_hat": [1.0, 1.0]
}"#;

/// Slopes 1/2 and 1/3 on the toy feeder.
const TOY_RULES: &str = r#"[
  {"bus": 1, "v_bar": 1.0, "delta": 0.0, "sigma": 0.1, "c": 2.0, "q_hat": 1.0},
  {"bus": 2, "v_bar": 1.0, "delta": 0.0, "sigma": 0.1, "c": 3.0, "q_hat": 1.0}
]"#;

/// Six-bus feeder with a lateral and PV at three buses.
const FEEDER: &str = r#"{
  "v0": 1.0,
  "buses": [
    {"id": 1, "parent": 0, "r": 0.010, "x": 0.012},
    {"id": 2, "parent": 1, "r": 0.015, "x": 0.010},
    {"id": 3, "parent": 2, "r": 0.020, "x": 0.015},
    {"id": 4, "parent": 3, "r": 0.012, "x": 0.010},
    {"id": 5, "parent": 2, "r": 0.018, "x": 0.014},
    {"id": 6, "parent": 5, "r": 0.010, "x": 0.008}
  ],
  "inverters": [3, 4, 6],
  "q_hat": [0.132, 0.176, 0.11],
  "p_bar": [0.3, 0.4, 0.25]
}"#;

/// Solar at fraction `solar` of rating and load `load` per bus.
fn scenario_rows(id: &str, solar: f64, load: f64) -> String {
    let p_bar = [(3, 0.3), (4, 0.4), (6, 0.25)];
    (1..=6)
        .map(|bus| {
            let p_g = p_bar.iter().find(|(b, _)| *b == bus).map_or(0.0, |(_, p)| solar * p);
            let p_l = load * (1.0 + 0.1 * bus as f64);
            format!("{id},{bus},{p_g},{p_l},{}\n", 0.3 * p_l)
        })
        .collect()
}

fn scenarios_csv() -> String {
    let mut s = String::from("scenario_id,bus_id,p_g,p_l,q_l\n");
    for (k, (solar, load)) in [(0.0, 0.06), (0.3, 0.04), (0.7, 0.03), (1.0, 0.02), (0.9, 0.05)]
        .into_iter()
        .enumerate()
    {
        s += &scenario_rows(&format!("s{k}"), solar, load);
    }
    s
}

fn flat_scenarios_csv() -> String {
    let mut s = String::from("scenario_id,bus_id,p_g,p_l,q_l\n");
    for k in 0..3 {
        s += &scenario_rows(&format!("flat{k}"), 0.0, 0.0);
    }
    s
}

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("feeder.json"), FEEDER).unwrap();
    std::fs::write(p.join("scenarios.csv"), scenarios_csv()).unwrap();
    std::fs::write(p.join("flat.csv"), flat_scenarios_csv()).unwrap();
    std::fs::write(p.join("toy.json"), TOY_FEEDER).unwrap();
    std::fs::write(p.join("toy_rules.json"), TOY_RULES).unwrap();
    dir
}

fn design(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["design", "--feeder", "feeder.json", "--scenarios", "scenarios.csv", "--eps", "0.05"];
    args.extend_from_slice(extra);
    run(dir, &args)
}

#[test]
fn missing_feeder_fails_with_message() {
    let ws = workspace();
    let out = run(ws.path(), &["design", "--feeder", "absent.json", "--scenarios", "scenarios.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("absent.json"), "{}", stderr(&out));
    assert!(!ws.path().join("rules.json").exists());
}

#[test]
fn eps_out_of_range_is_rejected_before_reading_inputs() {
    let ws = workspace();
    for eps in ["1", "1.5", "0", "-0.1"] {
        let flag = format!("--eps={eps}");
        let out = run(
            ws.path(),
            &["design", "--feeder", "absent.json", "--scenarios", "absent.csv", &flag],
        );
        assert_eq!(code(&out), 2, "eps {eps}");
        assert!(stderr(&out).contains("eps"), "{}", stderr(&out));
    }
    assert!(!ws.path().join("report.json").exists());
}

#[test]
fn malformed_inputs_are_validation_errors() {
    let ws = workspace();
    std::fs::write(ws.path().join("bad.json"), "{\"v0\": 1.0}").unwrap();
    let out = run(ws.path(), &["design", "--feeder", "bad.json", "--scenarios", "scenarios.csv"]);
    assert_eq!(code(&out), 2);
    std::fs::write(ws.path().join("bad.csv"), "scenario_id,bus_id,p_g,p_l,q_l\ns,99,0,0,0\n").unwrap();
    let out = run(ws.path(), &["design", "--feeder", "feeder.json", "--scenarios", "bad.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("99"));
}

#[test]
fn design_writes_certified_rules_and_reports() {
    let ws = workspace();
    let out = design(ws.path(), &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let p = ws.path();

    let rules = read_json(p.join("rules.json"));
    assert_schema(&rules, "rules");
    let buses: Vec<u64> = rules.as_array().unwrap().iter().map(|r| r["bus"].as_u64().unwrap()).collect();
    assert_eq!(buses, [3, 4, 6]);

    let report = read_json(p.join("report.json"));
    assert_schema(&report, "design_report");
    assert_eq!(report["stability"]["polytope_ok"], true);
    assert_eq!(report["equilibria"].as_array().unwrap().len(), 5);

    let history = report["history"].as_array().unwrap();
    let rows = csv_rows(p.join("cost_trajectory.csv"));
    assert_eq!(
        csv_header(p.join("cost_trajectory.csv")),
        ["iteration", "cost", "step", "polytope_ok", "projection_iterations"]
    );
    assert_eq!(rows.len(), history.len());
    let costs: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(costs.last().copied().unwrap(), report["cost"].as_f64().unwrap());

    // The written rules pass the stability check on their own.
    let out = run(p, &["stability-check", "--feeder", "feeder.json", "--rules", "rules.json", "--eps", "0.05", "--require-stable"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn design_output_is_byte_identical_across_runs_and_worker_counts() {
    let ws = workspace();
    let p = ws.path();
    let read = |name: &str| std::fs::read(p.join(name)).unwrap();
    let outputs = ["rules.json", "report.json", "cost_trajectory.csv"];

    assert_eq!(code(&design(p, &["--starts", "2"])), 0);
    let first: Vec<Vec<u8>> = outputs.iter().map(|f| read(f)).collect();
    assert_eq!(code(&design(p, &["--starts", "2", "--workers", "1"])), 0);
    let second: Vec<Vec<u8>> = outputs.iter().map(|f| read(f)).collect();
    let out = bin()
        .current_dir(p)
        .env("VOLTVAR_WORKERS", "2")
        .args(["design", "--feeder", "feeder.json", "--scenarios", "scenarios.csv", "--eps", "0.05", "--starts", "2"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let third: Vec<Vec<u8>> = outputs.iter().map(|f| read(f)).collect();
    assert_eq!(first, second);
    assert_eq!(first, third);
}

#[test]
fn nonsymmetric_design_round_trips_through_evaluate() {
    let ws = workspace();
    let p = ws.path();
    let out = design(p, &["--nonsymmetric", "--out", "ns.json", "--report", "ns_report.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_schema(&read_json(p.join("ns.json")), "nonsym_rules");
    let report = read_json(p.join("ns_report.json"));
    assert_eq!(report["params_per_inverter"], 7);

    let out = run(
        p,
        &["evaluate", "--nonsymmetric", "--feeder", "feeder.json", "--rules", "ns.json", "--scenarios", "scenarios.csv", "--eps", "0.05", "--out", "ev.json", "--require-stable"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ev = read_json(p.join("ev.json"));
    assert_schema(&ev, "evaluate");
    // Same scenarios, same rules: the evaluated VDM is the design cost.
    let vdm = ev["vdm"].as_f64().unwrap();
    let cost = report["cost"].as_f64().unwrap();
    assert!((vdm - cost).abs() <= 1e-9 * cost.max(1e-12), "{vdm} vs {cost}");
}

#[test]
fn invalid_worker_count_is_rejected() {
    let ws = workspace();
    let out = bin()
        .current_dir(ws.path())
        .env("VOLTVAR_WORKERS", "0")
        .args(["stability-check", "--feeder", "toy.json", "--rules", "toy_rules.json"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn stability_check_reports_toy_counterexample() {
    let ws = workspace();
    let p = ws.path();
    let out = run(p, &["stability-check", "--feeder", "toy.json", "--rules", "toy_rules.json", "--eps", "0.001"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_schema(&report, "stability_report");
    assert!((report["spectral_norm"].as_f64().unwrap() - 1.014).abs() <= 1e-3);
    assert_eq!(report["spectral_ok"], false);
    assert_eq!(report["polytope_ok"], false);
    let rows: Vec<u64> = report["violated_column_sum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert!(rows.contains(&1));
    assert_eq!(report["inverter_buses"][1], 2);

    let out = run(p, &["stability-check", "--feeder", "toy.json", "--rules", "toy_rules.json", "--require-stable"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn stability_check_rejects_rules_for_unknown_bus() {
    let ws = workspace();
    let p = ws.path();
    std::fs::write(p.join("r.json"), TOY_RULES.replace("\"bus\": 2", "\"bus\": 7")).unwrap();
    let out = run(p, &["stability-check", "--feeder", "toy.json", "--rules", "r.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn compare_on_flat_scenarios_gives_zero_vdm() {
    let ws = workspace();
    let p = ws.path();
    let out = run(
        p,
        &["compare", "--feeder", "feeder.json", "--scenarios", "flat.csv", "--out", "cmp.csv", "--voltages", "v.csv", "--report", "cmp.json"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(csv_header(p.join("cmp.csv")), ["scheme", "vdm", "max_deviation", "band_violations"]);
    let rows = csv_rows(p.join("cmp.csv"));
    let schemes: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(schemes, ["a1", "a2", "a3", "a4"]);
    for r in &rows {
        assert_eq!(r[1].parse::<f64>().unwrap(), 0.0, "{}", &r[0]);
        assert_eq!(&r[3], "0");
    }
    assert_eq!(csv_rows(p.join("v.csv")).len(), 4 * 3 * 6);
    assert_schema(&read_json(p.join("cmp.json")), "compare");
}

#[test]
fn compare_includes_designed_rules() {
    let ws = workspace();
    let p = ws.path();
    assert_eq!(code(&design(p, &[])), 0);
    let out = run(
        p,
        &["compare", "--feeder", "feeder.json", "--scenarios", "scenarios.csv", "--rules", "rules.json", "--eps", "0.05", "--out", "cmp.csv"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = csv_rows(p.join("cmp.csv"));
    let vdm = |s: &str| -> f64 { rows.iter().find(|r| &r[0] == s).unwrap()[1].parse().unwrap() };
    assert_eq!(rows.len(), 5);
    // Per-scenario optimal dispatch is a lower bound for any rule set.
    assert!(vdm("a2") <= vdm("designed") + 1e-12);
    assert!(vdm("designed") <= vdm("a1"));
}

#[test]
fn simulate_emits_one_row_per_step_and_bus() {
    let ws = workspace();
    let p = ws.path();
    assert_eq!(code(&design(p, &[])), 0);
    let out = run(
        p,
        &["simulate", "--feeder", "feeder.json", "--rules", "rules.json", "--scenarios", "scenarios.csv", "--scenario", "s3", "--eps", "0.05", "--out", "traj.csv", "--equilibrium", "eq.json", "--require-stable"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = read_json(p.join("eq.json"));
    assert_schema(&summary, "simulation");
    assert_eq!(summary["scenario"], "s3");
    assert_eq!(summary["converged"], true);
    let steps = summary["steps"].as_u64().unwrap() as usize;
    assert_eq!(csv_header(p.join("traj.csv")), ["step", "bus", "v", "q"]);
    let rows = csv_rows(p.join("traj.csv"));
    assert_eq!(rows.len(), (steps + 1) * 6);
    let last_step: usize = rows.last().unwrap()[0].parse().unwrap();
    assert_eq!(last_step, steps);
    // Non-inverter buses never inject.
    assert!(rows.iter().filter(|r| &r[1] == "1").all(|r| r[3].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn simulate_unknown_scenario_is_a_validation_error() {
    let ws = workspace();
    let out = run(
        ws.path(),
        &["simulate", "--feeder", "toy.json", "--rules", "toy_rules.json", "--scenarios", "flat.csv", "--scenario", "nope"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_flags_unstable_rules_when_stability_is_required() {
    let ws = workspace();
    let p = ws.path();
    std::fs::write(
        p.join("toy_scen.csv"),
        "scenario_id,bus_id,p_g,p_l,q_l\nx,1,0.2,0,0\nx,2,0.3,0,0\n",
    )
    .unwrap();
    let args = ["simulate", "--feeder", "toy.json", "--rules", "toy_rules.json", "--scenarios", "toy_scen.csv", "--max-steps", "200"];
    assert_eq!(code(&run(p, &args)), 0);
    let mut strict = args.to_vec();
    strict.push("--require-stable");
    assert_eq!(code(&run(p, &strict)), 4);
}

#[test]
fn validate_linearization_tracks_ac_power_flow() {
    let ws = workspace();
    let p = ws.path();
    let out = run(p, &["validate-linearization", "--feeder", "feeder.json", "--scenarios", "scenarios.csv", "--out", "lin.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(csv_header(p.join("lin.csv")), ["bus", "scenario", "v_lin", "v_ac", "error"]);
    let rows = csv_rows(p.join("lin.csv"));
    assert_eq!(rows.len(), 5 * 6);
    for r in &rows {
        let (lin, ac, err): (f64, f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!((ac - lin - err).abs() < 1e-15);
        assert!(err.abs() < 0.01, "{r:?}");
    }
}

fn time_series(steps: usize, buses: usize) -> String {
    let mut s = String::from("time,bus_id,p_g,p_l,q_l\n");
    for t in 0..steps {
        for b in 1..=buses {
            s += &format!("{t:04},{b},{},{},{}\n", 0.001 * t as f64, 0.01 * b as f64, 0.002);
        }
    }
    s
}

#[test]
fn scenarios_average_one_minute_rows_into_windows() {
    let ws = workspace();
    let p = ws.path();
    std::fs::write(p.join("ts.csv"), time_series(120, 2)).unwrap();

    let out = run(p, &["scenarios", "--input", "ts.csv", "--window", "5", "--out", "s5.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_schema(&summary, "scenarios_summary");
    assert_eq!(summary["scenarios"], 24);
    assert_eq!(summary["partial_window"], Value::Null);
    let rows = csv_rows(p.join("s5.csv"));
    assert_eq!(rows.len(), 24 * 2);
    assert_eq!(csv_header(p.join("s5.csv")), ["scenario_id", "bus_id", "p_g", "p_l", "q_l"]);
    // First window averages t = 0..5.
    assert!((rows[0][2].parse::<f64>().unwrap() - 0.002).abs() < 1e-15);

    let out = run(p, &["scenarios", "--input", "ts.csv", "--window", "120", "--out", "s120.csv"]);
    assert_eq!(code(&out), 0);
    assert_eq!(csv_rows(p.join("s120.csv")).len(), 2);
}

#[test]
fn scenarios_flag_trailing_partial_window() {
    let ws = workspace();
    let p = ws.path();
    std::fs::write(p.join("ts.csv"), time_series(12, 1)).unwrap();
    let out = run(p, &["scenarios", "--input", "ts.csv", "--window", "5", "--out", "s.csv", "--summary", "sum.json"]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("trailing window"));
    let summary = read_json(p.join("sum.json"));
    assert_eq!(summary["scenarios"], 3);
    assert_eq!(summary["partial_window"], 2);
    // Mean of t = 10, 11.
    let rows = csv_rows(p.join("s.csv"));
    assert!((rows[2][2].parse::<f64>().unwrap() - 0.0105).abs() < 1e-15);

    let out = run(p, &["scenarios", "--input", "ts.csv", "--window", "5", "--out", "s.csv", "--strict"]);
    assert_eq!(code(&out), 2);
    let out = run(p, &["scenarios", "--input", "ts.csv", "--window", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn help_documents_every_subcommand() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["design", "simulate", "compare", "stability-check", "validate-linearization", "scenarios", "evaluate", "VOLTVAR_WORKERS"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
    let out = bin().args(["design", "--help"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in ["--feeder", "--scenarios", "--eps", "--out", "--report", "--step", "--no-backtracking", "--seed", "--workers"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn shipped_schemas_are_valid_documents() {
    let meta = jsonschema::draft202012::meta::validator();
    let mut count = 0;
    for entry in std::fs::read_dir(schema_dir()).unwrap() {
        let path = entry.unwrap().path();
        let schema = read_json(&path);
        assert!(meta.is_valid(&schema), "{}", path.display());
        jsonschema::validator_for(&schema).unwrap();
        count += 1;
    }
    assert_eq!(count, 9);
}
