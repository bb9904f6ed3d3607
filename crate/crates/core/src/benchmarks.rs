//! Reference dispatch schemes and the voltage deviation metric.
//!
//! - `a1`: unit power factor, `q = 0`.
//! - `a2`: per-scenario optimal dispatch, `min ‖X_{·G} q + ṽ_s − 1‖²` over `|q| ≤ q̂`.
//! - `a3`: one dispatch shared by all scenarios.
//! - `a4`: IEEE 1547 default curves.
//! - `designed`: any rule set, e.g. the output of the designer.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{simulate_dynamics, solve_batch, DynamicsOptions, Equilibrium};
use crate::error::{Error, Result};
use crate::feeder::{FeederModel, Scenario};
use crate::qp::{self, QpOptions};
use crate::rules::{RuleSet, VoltVarRule};
use crate::stability::{self, StabilityReport};

/// Half-width of the acceptable voltage band used for violation counts.
pub const VOLTAGE_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    A1,
    A2,
    A3,
    A4,
    Designed,
}

impl Scheme {
    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::A1 => "a1",
            Scheme::A2 => "a2",
            Scheme::A3 => "a3",
            Scheme::A4 => "a4",
            Scheme::Designed => "designed",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub scheme: Scheme,
    /// Full voltage profile per scenario.
    pub voltages: Vec<Vec<f64>>,
    /// Inverter injections per scenario.
    pub q: Vec<Vec<f64>>,
    pub vdm: f64,
    pub max_deviation: f64,
    /// Bus-scenario pairs with `|v − 1| > 0.05`.
    pub band_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stability: Option<StabilityReport>,
    /// Whether the rule dynamics converged, per scenario.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dynamics_converged: Option<Vec<bool>>,
}

impl BenchmarkResult {
    fn new(scheme: Scheme, voltages: Vec<Vec<f64>>, q: Vec<Vec<f64>>) -> Self {
        let devs = voltages.iter().flatten().map(|v| (v - 1.0).abs());
        let max_deviation = devs.clone().fold(0.0, f64::max);
        let band_violations = devs.filter(|d| *d > VOLTAGE_BAND).count();
        BenchmarkResult {
            scheme,
            vdm: vdm(&voltages),
            voltages,
            q,
            max_deviation,
            band_violations,
            stability: None,
            dynamics_converged: None,
        }
    }

    fn from_equilibria(scheme: Scheme, eqs: Vec<Equilibrium>) -> Self {
        let (voltages, q) = eqs.into_iter().map(|e| (e.v, e.q)).unzip();
        Self::new(scheme, voltages, q)
    }
}

/// `(1/2S) Σ_s ‖v_s − 1‖²`.
pub fn vdm<V: AsRef<[f64]>>(voltages: &[V]) -> f64 {
    if voltages.is_empty() {
        return 0.0;
    }
    let total: f64 = voltages
        .iter()
        .map(|v| v.as_ref().iter().map(|x| (x - 1.0) * (x - 1.0)).sum::<f64>())
        .sum();
    total / (2.0 * voltages.len() as f64)
}

fn require_scenarios(scenarios: &[Scenario]) -> Result<()> {
    if scenarios.is_empty() {
        return Err(Error::NoScenarios);
    }
    Ok(())
}

fn check_caps(model: &FeederModel, q_hat: &[f64]) -> Result<()> {
    if q_hat.len() != model.inverter_count() {
        return Err(Error::DimensionMismatch {
            expected: model.inverter_count(),
            got: q_hat.len(),
        });
    }
    Ok(())
}

/// Scheme a1.
pub fn unit_pf(model: &FeederModel, scenarios: &[Scenario]) -> Result<BenchmarkResult> {
    require_scenarios(scenarios)?;
    let m = model.inverter_count();
    let voltages = scenarios
        .iter()
        .map(|s| s.v_tilde().iter().copied().collect())
        .collect();
    Ok(BenchmarkResult::new(
        Scheme::A1,
        voltages,
        vec![vec![0.0; m]; scenarios.len()],
    ))
}

/// `argmin_{|q| ≤ q̂} ‖X_{·G} q + ṽ − 1‖²`.
pub fn box_least_squares(
    model: &FeederModel,
    v_tilde: &DVector<f64>,
    q_hat: &[f64],
    opts: &QpOptions,
) -> Result<DVector<f64>> {
    let xc = model.x_cols();
    let h = xc.transpose() * xc;
    let b = xc.transpose() * v_tilde.add_scalar(-1.0);
    let terms: Vec<_> = q_hat.iter().map(|&q| qp::box_term(q)).collect();
    Ok(qp::solve(&h, &b, &terms, None, opts)?.q)
}

/// Scheme a2.
pub fn per_scenario_optimal(
    model: &FeederModel,
    scenarios: &[Scenario],
    q_hat: &[f64],
) -> Result<BenchmarkResult> {
    require_scenarios(scenarios)?;
    check_caps(model, q_hat)?;
    let opts = QpOptions::default();
    let solved: Vec<(Vec<f64>, Vec<f64>)> = scenarios
        .par_iter()
        .map(|s| {
            let q = box_least_squares(model, s.v_tilde(), q_hat, &opts)?;
            let v = model.x_cols() * &q + s.v_tilde();
            Ok((v.iter().copied().collect(), q.iter().copied().collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (voltages, q) = solved.into_iter().unzip();
    Ok(BenchmarkResult::new(Scheme::A2, voltages, q))
}

/// Scheme a3: the summed objective equals the single-scenario objective at
/// the mean `ṽ` up to a constant.
pub fn stochastic_optimal(
    model: &FeederModel,
    scenarios: &[Scenario],
    q_hat: &[f64],
) -> Result<BenchmarkResult> {
    require_scenarios(scenarios)?;
    check_caps(model, q_hat)?;
    let mut mean = DVector::zeros(model.bus_count());
    for s in scenarios {
        mean += s.v_tilde();
    }
    mean /= scenarios.len() as f64;
    let q = box_least_squares(model, &mean, q_hat, &QpOptions::default())?;
    let shared: Vec<f64> = q.iter().copied().collect();
    let voltages = scenarios
        .iter()
        .map(|s| (model.x_cols() * &q + s.v_tilde()).iter().copied().collect())
        .collect();
    Ok(BenchmarkResult::new(
        Scheme::A3,
        voltages,
        vec![shared; scenarios.len()],
    ))
}

/// Equilibria of an arbitrary rule set, with stability verdicts and a
/// dynamics run per scenario.
pub fn rule_based<R: VoltVarRule>(
    model: &FeederModel,
    rules: &RuleSet<R>,
    scenarios: &[Scenario],
    scheme: Scheme,
    eps: f64,
) -> Result<BenchmarkResult> {
    require_scenarios(scenarios)?;
    let eqs = solve_batch(model, rules, scenarios, &QpOptions::default(), None)?;
    let converged = scenarios
        .par_iter()
        .map(|s| Ok(simulate_dynamics(model, rules, s, &DynamicsOptions::default())?.converged))
        .collect::<Result<Vec<_>>>()?;
    let mut out = BenchmarkResult::from_equilibria(scheme, eqs);
    out.stability = Some(stability::check(model.x_gg(), &rules.slopes(), eps)?);
    out.dynamics_converged = Some(converged);
    Ok(out)
}

/// Scheme a4.
pub fn default_1547(
    model: &FeederModel,
    scenarios: &[Scenario],
    p_bar: &[f64],
    eps: f64,
) -> Result<BenchmarkResult> {
    check_caps(model, p_bar)?;
    let rules = RuleSet::ieee_default(p_bar)?;
    rule_based(model, &rules, scenarios, Scheme::A4, eps)
}

/// Out-of-sample evaluation of a trained rule set.
pub fn evaluate<R: VoltVarRule>(
    model: &FeederModel,
    rules: &RuleSet<R>,
    scenarios: &[Scenario],
    eps: f64,
) -> Result<BenchmarkResult> {
    rule_based(model, rules, scenarios, Scheme::Designed, eps)
}

/// All four reference schemes, plus `designed` when rules are given.
pub fn compare<R: VoltVarRule>(
    model: &FeederModel,
    scenarios: &[Scenario],
    designed: Option<&RuleSet<R>>,
    eps: f64,
) -> Result<Vec<BenchmarkResult>> {
    let mut out = vec![
        unit_pf(model, scenarios)?,
        per_scenario_optimal(model, scenarios, model.q_hat())?,
        stochastic_optimal(model, scenarios, model.q_hat())?,
        default_1547(model, scenarios, model.p_bar(), eps)?,
    ];
    if let Some(rules) = designed {
        out.push(evaluate(model, rules, scenarios, eps)?);
    }
    Ok(out)
}
