use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use voltvar::acpf::{scenario_voltages, AcOptions};
use voltvar::benchmarks::{self, BenchmarkResult};
use voltvar::designer::{DesignConfig, DesignReport, StopReason};
use voltvar::equilibrium::{simulate_dynamics, solve_batch, DynamicsOptions, Equilibrium};
use voltvar::feeder::{voltages, FeederModel, Scenario};
use voltvar::io::{self, NamedScenario};
use voltvar::rules::{NonSymRuleParams, RuleParams, RuleSet};
use voltvar::stability::{self, StabilityReport};
use voltvar::QpOptions;

use crate::error::CliError;
use crate::files::{read_feeder, read_rules, read_scenarios, read_text, write_bytes, write_csv, write_json, RuleFile};
use crate::{CompareArgs, DesignArgs, EvaluateArgs, ScenariosArgs, SimulateArgs, StabilityArgs, ValidateArgs};

/// Voltage band for reporting settling time.
const SETTLING_BAND: f64 = 1e-4;

macro_rules! by_family {
    ($family:expr, $f:ident($($arg:expr),* $(,)?)) => {
        if $family.nonsymmetric {
            $f::<NonSymRuleParams>($($arg),*)
        } else {
            $f::<RuleParams>($($arg),*)
        }
    };
}

fn check_eps(eps: f64) -> Result<(), CliError> {
    if (0.0..1.0).contains(&eps) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--eps must lie in [0, 1), got {eps}")))
    }
}

fn split(named: Vec<NamedScenario>) -> (Vec<String>, Vec<Scenario>) {
    named.into_iter().map(|n| (n.id, n.scenario)).unzip()
}

fn load_inputs(feeder: &std::path::Path, scenarios: &std::path::Path) -> Result<(FeederModel, Vec<String>, Vec<Scenario>), CliError> {
    let model = read_feeder(feeder)?;
    let (ids, scen) = split(read_scenarios(&model, scenarios)?);
    Ok((model, ids, scen))
}

pub fn design(a: &DesignArgs) -> Result<(), CliError> {
    let cfg = DesignConfig {
        eps: a.eps,
        step: a.step,
        rel_tol: a.rel_tol,
        cost_floor: a.cost_floor,
        max_iters: a.max_iters,
        backtracking: !a.no_backtracking,
        max_halvings: a.max_halvings,
        step_growth: a.step_growth,
        max_step: a.max_step,
        acceleration: a.accelerate,
        starts: a.starts,
        seed: a.seed,
        qp: QpOptions {
            tol: a.qp_tol,
            ..QpOptions::default()
        },
        record_timings: a.timings,
    };
    cfg.validate()?;
    let (model, _, scenarios) = load_inputs(&a.feeder, &a.scenarios)?;
    by_family!(a.family, design_with(&model, &scenarios, &cfg, a))
}

#[derive(Serialize)]
struct CostRow {
    iteration: usize,
    cost: f64,
    step: f64,
    polytope_ok: bool,
    projection_iterations: usize,
}

fn design_with<R: RuleFile>(
    model: &FeederModel,
    scenarios: &[Scenario],
    cfg: &DesignConfig,
    a: &DesignArgs,
) -> Result<(), CliError> {
    let report: DesignReport = voltvar::design::<R>(model, scenarios, cfg)?;
    let rules = report.rules::<R>(model)?;
    write_bytes(&a.out, R::to_json(model, &rules)?.as_bytes())?;
    write_json(&report, Some(&a.report))?;
    let trajectory = a
        .trajectory
        .clone()
        .unwrap_or_else(|| a.report.with_file_name("cost_trajectory.csv"));
    write_csv(
        &trajectory,
        report.history.iter().map(|h| CostRow {
            iteration: h.iteration,
            cost: h.cost,
            step: h.step,
            polytope_ok: h.polytope_ok,
            projection_iterations: h.projection_iterations,
        }),
    )?;
    if report.stop == StopReason::MaxIterations {
        eprintln!("warning: iteration cap reached; rules are certified but may not be optimal");
    }
    eprintln!(
        "cost {:.6e} after {} iterations (spectral norm {:.4})",
        report.cost,
        report.history.len().saturating_sub(1),
        report.stability.spectral_norm
    );
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryRow {
    step: usize,
    bus: u64,
    v: f64,
    q: f64,
}

#[derive(Serialize)]
struct SimulationSummary {
    scenario: String,
    converged: bool,
    steps: usize,
    settling_steps: usize,
    stability: StabilityReport,
    equilibrium: Equilibrium,
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    check_eps(a.eps)?;
    if a.max_steps == 0 || !(a.tol >= 0.0) {
        return Err(CliError::Usage("--max-steps must be positive and --tol non-negative".into()));
    }
    let (model, ids, scenarios) = load_inputs(&a.feeder, &a.scenarios)?;
    let pick = match &a.scenario {
        Some(id) => ids
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| CliError::Usage(format!("scenario {id} not found")))?,
        None => 0,
    };
    by_family!(a.family, simulate_with(&model, &ids[pick], &scenarios[pick], a))
}

fn simulate_with<R: RuleFile>(
    model: &FeederModel,
    id: &str,
    scenario: &Scenario,
    a: &SimulateArgs,
) -> Result<(), CliError> {
    let rules: RuleSet<R> = read_rules(model, &a.rules)?;
    let opts = DynamicsOptions {
        max_steps: a.max_steps,
        tol: a.tol,
        v_init: None,
    };
    let run = simulate_dynamics(model, &rules, scenario, &opts)?;
    let stability = stability::check(model.x_gg(), &rules.slopes(), a.eps)?;
    let buses = model.ids();
    let rows = run.trajectory.iter().enumerate().flat_map(|(t, step)| {
        let q = model.embed_inverter_q(&step.q);
        (0..buses.len())
            .map(|k| TrajectoryRow {
                step: t,
                bus: buses[k],
                v: step.v[k],
                q: q[k],
            })
            .collect::<Vec<_>>()
    });
    write_csv(&a.out, rows)?;
    let summary = SimulationSummary {
        scenario: id.to_string(),
        converged: run.converged,
        steps: run.trajectory.len() - 1,
        settling_steps: run.settling_steps(SETTLING_BAND),
        stability,
        equilibrium: run.equilibrium,
    };
    write_json(&summary, a.equilibrium.as_deref())?;
    if !summary.converged {
        eprintln!("warning: dynamics did not settle within {} steps", a.max_steps);
    }
    if a.require_stable && !(summary.stability.spectral_ok && summary.converged) {
        return Err(CliError::Unstable(format!(
            "rules are not stable (spectral norm {:.4}, settled: {})",
            summary.stability.spectral_norm, summary.converged
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareRow<'a> {
    scheme: &'a str,
    vdm: f64,
    max_deviation: f64,
    band_violations: usize,
}

#[derive(Serialize)]
struct VoltageRow<'a> {
    scheme: &'a str,
    scenario: &'a str,
    bus: u64,
    v: f64,
}

#[derive(Serialize)]
struct CompareReport<'a> {
    scenarios: &'a [String],
    schemes: &'a [BenchmarkResult],
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    check_eps(a.eps)?;
    let (model, ids, scenarios) = load_inputs(&a.feeder, &a.scenarios)?;
    by_family!(a.family, compare_with(&model, &ids, &scenarios, a))
}

fn compare_with<R: RuleFile>(
    model: &FeederModel,
    ids: &[String],
    scenarios: &[Scenario],
    a: &CompareArgs,
) -> Result<(), CliError> {
    let rules: Option<RuleSet<R>> = a.rules.as_ref().map(|p| read_rules(model, p)).transpose()?;
    let results = benchmarks::compare(model, scenarios, rules.as_ref(), a.eps)?;
    write_csv(
        &a.out,
        results.iter().map(|r| CompareRow {
            scheme: r.scheme.tag(),
            vdm: r.vdm,
            max_deviation: r.max_deviation,
            band_violations: r.band_violations,
        }),
    )?;
    if let Some(path) = &a.voltages {
        let buses = model.ids();
        let rows = results.iter().flat_map(|r| {
            r.voltages.iter().zip(ids).flat_map(move |(v, id)| {
                v.iter().zip(buses).map(move |(v, b)| VoltageRow {
                    scheme: r.scheme.tag(),
                    scenario: id,
                    bus: *b,
                    v: *v,
                })
            })
        });
        write_csv(path, rows)?;
    }
    if let Some(path) = &a.report {
        let report = CompareReport {
            scenarios: ids,
            schemes: &results,
        };
        write_json(&report, Some(path))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct StabilityOutput<'a> {
    /// Inverter bus ids; the violated-row indices refer to this order.
    inverter_buses: Vec<u64>,
    #[serde(flatten)]
    report: &'a StabilityReport,
}

pub fn stability_check(a: &StabilityArgs) -> Result<(), CliError> {
    check_eps(a.eps)?;
    let model = read_feeder(&a.feeder)?;
    by_family!(a.family, stability_with(&model, a))
}

fn stability_with<R: RuleFile>(model: &FeederModel, a: &StabilityArgs) -> Result<(), CliError> {
    let rules: RuleSet<R> = read_rules(model, &a.rules)?;
    let report = stability::check(model.x_gg(), &rules.slopes(), a.eps)?;
    let out = StabilityOutput {
        inverter_buses: model.inverter_ids(),
        report: &report,
    };
    write_json(&out, a.out.as_deref())?;
    if a.require_stable && !report.spectral_ok {
        return Err(CliError::Unstable(format!(
            "spectral norm {:.4} exceeds 1 - eps = {:.4}",
            report.spectral_norm,
            1.0 - a.eps
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct LinearizationRow<'a> {
    bus: u64,
    scenario: &'a str,
    v_lin: f64,
    v_ac: f64,
    error: f64,
}

pub fn validate_linearization(a: &ValidateArgs) -> Result<(), CliError> {
    let (model, ids, scenarios) = load_inputs(&a.feeder, &a.scenarios)?;
    by_family!(a.family, validate_with(&model, &ids, &scenarios, a))
}

fn validate_with<R: RuleFile>(
    model: &FeederModel,
    ids: &[String],
    scenarios: &[Scenario],
    a: &ValidateArgs,
) -> Result<(), CliError> {
    let q_g: Vec<_> = match &a.rules {
        Some(p) => {
            let rules: RuleSet<R> = read_rules(model, p)?;
            solve_batch(model, &rules, scenarios, &QpOptions::default(), None)?
                .iter()
                .map(|e| e.q_vec())
                .collect()
        }
        None => vec![DVector::zeros(model.inverter_count()); scenarios.len()],
    };
    let profiles = scenarios
        .par_iter()
        .zip(&q_g)
        .map(|(s, q)| {
            let lin = voltages(model, s, &model.embed_inverter_q(q))?;
            let ac = scenario_voltages(model, s, q, &AcOptions::default())?;
            Ok((lin, ac))
        })
        .collect::<voltvar::Result<Vec<_>>>()?;
    let buses = model.ids();
    let rows = profiles.iter().zip(ids).flat_map(|((lin, ac), id)| {
        (0..buses.len()).map(move |k| LinearizationRow {
            bus: buses[k],
            scenario: id,
            v_lin: lin[k],
            v_ac: ac[k],
            error: ac[k] - lin[k],
        })
    });
    write_csv(&a.out, rows)?;
    let worst = profiles
        .iter()
        .flat_map(|(lin, ac)| (ac - lin).iter().map(|e| e.abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    eprintln!("largest |v_ac - v_lin| = {worst:.3e}");
    Ok(())
}

#[derive(Serialize)]
struct ScenarioSummary {
    time_steps: usize,
    buses: usize,
    window: usize,
    scenarios: usize,
    /// Length of the trailing window when shorter than `window`.
    partial_window: Option<usize>,
}

pub fn scenarios(a: &ScenariosArgs) -> Result<(), CliError> {
    if a.window == 0 {
        return Err(CliError::Usage("--window must be positive".into()));
    }
    let rows = io::parse_time_rows(read_text(&a.input)?.as_bytes())?;
    if rows.is_empty() {
        return Err(voltvar::Error::NoScenarios.into());
    }
    let windowed = io::aggregate_windows(&rows, a.window)?;
    if let Some(len) = windowed.partial {
        if a.strict {
            return Err(CliError::Usage(format!(
                "trailing window holds {len} of {} time steps",
                a.window
            )));
        }
        eprintln!(
            "warning: trailing window holds {len} of {} time steps and is averaged over {len}",
            a.window
        );
    }
    let mut times: Vec<&str> = rows.iter().map(|r| r.time.as_str()).collect();
    times.sort_unstable();
    times.dedup();
    let mut buses: Vec<u64> = rows.iter().map(|r| r.bus_id).collect();
    buses.sort_unstable();
    buses.dedup();
    write_csv(&a.out, &windowed.rows)?;
    let summary = ScenarioSummary {
        time_steps: times.len(),
        buses: buses.len(),
        window: a.window,
        scenarios: windowed.rows.len() / buses.len(),
        partial_window: windowed.partial,
    };
    write_json(&summary, a.summary.as_deref())
}

#[derive(Serialize)]
struct EvaluateReport<'a> {
    scenarios: &'a [String],
    #[serde(flatten)]
    result: &'a BenchmarkResult,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    check_eps(a.eps)?;
    let (model, ids, scenarios) = load_inputs(&a.feeder, &a.scenarios)?;
    by_family!(a.family, evaluate_with(&model, &ids, &scenarios, a))
}

fn evaluate_with<R: RuleFile>(
    model: &FeederModel,
    ids: &[String],
    scenarios: &[Scenario],
    a: &EvaluateArgs,
) -> Result<(), CliError> {
    let rules: RuleSet<R> = read_rules(model, &a.rules)?;
    let result = benchmarks::evaluate(model, &rules, scenarios, a.eps)?;
    write_json(
        &EvaluateReport {
            scenarios: ids,
            result: &result,
        },
        a.out.as_deref(),
    )?;
    let certified = result.stability.as_ref().is_some_and(|s| s.spectral_ok);
    let settled = result
        .dynamics_converged
        .as_ref()
        .is_some_and(|c| c.iter().all(|x| *x));
    if a.require_stable && !(certified && settled) {
        return Err(CliError::Unstable(format!(
            "rules are not stable (certified: {certified}, all scenarios settled: {settled})"
        )));
    }
    Ok(())
}
