use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod files;

use error::CliError;

/// Stability-constrained design and evaluation of Volt/VAR curves for
/// radial distribution feeders.
///
/// Exit codes: 0 success, 2 invalid input or configuration, 3 solver
/// failure, 4 instability detected where stability was required.
#[derive(Debug, Parser)]
#[command(name = "voltvar", version, about, long_about)]
struct Cli {
    /// Worker threads for scenario-level parallelism (default: one per core).
    #[arg(long, global = true, env = "VOLTVAR_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Design rules by projected gradient descent over a scenario set.
    Design(DesignArgs),
    /// Run the closed-loop dynamics for one scenario.
    Simulate(SimulateArgs),
    /// Compare reference dispatch schemes and, optionally, designed rules.
    Compare(CompareArgs),
    /// Check a rule set against the stability certificates.
    StabilityCheck(StabilityArgs),
    /// Compare linearized voltages against the AC power flow.
    ValidateLinearization(ValidateArgs),
    /// Average a high-resolution time series into one scenario per window.
    Scenarios(ScenariosArgs),
    /// Evaluate trained rules on a (held-out) scenario set.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct RuleFamily {
    /// Rules have separate parameters for over- and under-voltage.
    #[arg(long)]
    pub nonsymmetric: bool,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Feeder JSON.
    #[arg(long)]
    pub feeder: PathBuf,
    /// Scenario CSV (scenario_id, bus_id, p_g, p_l, q_l).
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Stability margin ε in (0, 1).
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Output rules JSON.
    #[arg(long, default_value = "rules.json")]
    pub out: PathBuf,
    /// Output design report JSON.
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
    /// Output per-iteration cost CSV [default: cost_trajectory.csv next to the report].
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Initial gradient step.
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    /// Use the fixed step instead of Armijo backtracking.
    #[arg(long)]
    pub no_backtracking: bool,
    /// Maximum step halvings per iteration.
    #[arg(long, default_value_t = 30)]
    pub max_halvings: usize,
    /// Growth factor applied to the last accepted step.
    #[arg(long, default_value_t = 2.0)]
    pub step_growth: f64,
    /// Upper limit on the step.
    #[arg(long, default_value_t = 1e12)]
    pub max_step: f64,
    /// Nesterov extrapolation with restart on cost increase.
    #[arg(long)]
    pub accelerate: bool,
    /// Stop when the relative cost change falls below this value.
    #[arg(long, default_value_t = 1e-6)]
    pub rel_tol: f64,
    /// Stop when the cost falls below this value.
    #[arg(long, default_value_t = 1e-12)]
    pub cost_floor: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// Tolerance of the equilibrium solver.
    #[arg(long, default_value_t = 1e-10)]
    pub qp_tol: f64,
    /// Number of starting points; extra starts are drawn from `seed`.
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
    /// Seed for random starting points.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record wall-clock timings in the report (makes it non-deterministic).
    #[arg(long)]
    pub timings: bool,
    #[command(flatten)]
    pub family: RuleFamily,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    /// Rules JSON.
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Scenario id to simulate [default: the first one].
    #[arg(long)]
    pub scenario: Option<String>,
    /// Step cap.
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: usize,
    /// Stop when no injection moves by more than this between steps.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Output trajectory CSV (step, bus, v, q).
    #[arg(long, default_value = "trajectory.csv")]
    pub out: PathBuf,
    /// Output equilibrium JSON [default: stdout].
    #[arg(long)]
    pub equilibrium: Option<PathBuf>,
    /// Margin ε used with --require-stable.
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Exit with 4 when the rules are not certified or the run does not settle.
    #[arg(long)]
    pub require_stable: bool,
    #[command(flatten)]
    pub family: RuleFamily,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Designed rules to include as an extra scheme.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Margin ε for the stability verdicts of rule-based schemes.
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Output table CSV (scheme, vdm, max_deviation, band_violations).
    #[arg(long, default_value = "compare.csv")]
    pub out: PathBuf,
    /// Per-scheme voltage dump CSV (scheme, scenario, bus, v).
    #[arg(long)]
    pub voltages: Option<PathBuf>,
    /// Full results JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub family: RuleFamily,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Output report JSON [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with 4 when the spectral bound fails.
    #[arg(long)]
    pub require_stable: bool,
    #[command(flatten)]
    pub family: RuleFamily,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Rules whose equilibria set the injections [default: no reactive injection].
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Output CSV (bus, scenario, v_lin, v_ac, error).
    #[arg(long, default_value = "linearization.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub family: RuleFamily,
}

#[derive(Debug, Args)]
pub struct ScenariosArgs {
    /// Time series CSV (time, bus_id, p_g, p_l, q_l), rows in time order.
    #[arg(long)]
    pub input: PathBuf,
    /// Time steps per scenario.
    #[arg(long)]
    pub window: usize,
    /// Output scenario CSV.
    #[arg(long, default_value = "scenarios.csv")]
    pub out: PathBuf,
    /// Summary JSON [default: stdout].
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Reject a trailing partial window instead of averaging it.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub scenarios: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Output result JSON [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with 4 when the rules are not certified or a scenario does not settle.
    #[arg(long)]
    pub require_stable: bool,
    #[command(flatten)]
    pub family: RuleFamily,
}

fn configure_pool(workers: Option<usize>) -> Result<(), CliError> {
    let Some(n) = workers else {
        return Ok(());
    };
    if n == 0 {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_pool(cli.workers)?;
    match cli.command {
        Command::Design(a) => commands::design(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::StabilityCheck(a) => commands::stability_check(&a),
        Command::ValidateLinearization(a) => commands::validate_linearization(&a),
        Command::Scenarios(a) => commands::scenarios(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
