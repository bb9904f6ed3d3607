//! Equilibria of the closed-loop Volt/VAR dynamics
//!
//! ```text
//! v(t)   = X q(t) + ṽ
//! q(t+1) = f(v(t))
//! ```
//!
//! computed either by iterating the dynamics or as the minimizer of the
//! equivalent convex program `½qᵀX_GG q + qᵀ(ṽ_G − v̄) + C(q)` over the
//! saturation box. The two routes cross-check each other.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{FeederModel, Scenario};
use crate::linalg;
use crate::qp::{self, QpOptions};
use crate::rules::{NonSymRuleParams, RuleParams, RuleSet, VoltVarRule};
use crate::stability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dynamics,
    Prox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Injections at inverter buses.
    pub q: Vec<f64>,
    /// Voltages at all buses.
    pub v: Vec<f64>,
    pub method: Method,
    pub iterations: usize,
    pub residual: f64,
}

impl Equilibrium {
    pub fn q_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.q)
    }

    pub fn v_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.v)
    }
}

#[derive(Debug, Clone)]
pub struct DynamicsOptions {
    pub max_steps: usize,
    pub tol: f64,
    /// Initial voltages; defaults to `ṽ` (zero injections).
    pub v_init: Option<DVector<f64>>,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        DynamicsOptions {
            max_steps: 10_000,
            tol: 1e-9,
            v_init: None,
        }
    }
}

/// One time step of the dynamics: voltages at all buses, injections at
/// inverter buses.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsStep {
    pub v: DVector<f64>,
    pub q: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct DynamicsRun {
    pub equilibrium: Equilibrium,
    /// Steps `0..=T`; step 0 holds the initial voltages with zero injections.
    pub trajectory: Vec<DynamicsStep>,
    pub converged: bool,
    /// `‖diag(α)·X_GG‖₂` of the simulated rules.
    pub spectral_norm: f64,
}

impl DynamicsRun {
    /// Returns the run, or `NotConverged` if the step cap was hit.
    pub fn into_result(self) -> Result<DynamicsRun> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged(self.trajectory.len() - 1))
        }
    }

    /// First step after which every voltage stays within `band` of the
    /// final voltages.
    pub fn settling_steps(&self, band: f64) -> usize {
        settling_steps(&self.trajectory, band)
    }
}

/// Settling index of a voltage trajectory relative to its last entry.
pub fn settling_steps(trajectory: &[DynamicsStep], band: f64) -> usize {
    let Some(last) = trajectory.last() else {
        return 0;
    };
    let mut settled = trajectory.len() - 1;
    for (t, step) in trajectory.iter().enumerate().rev() {
        if linalg::inf_norm(&(&step.v - &last.v)) > band {
            break;
        }
        settled = t;
    }
    settled
}

/// Iterates the two-step dynamics until `‖q(t+1) − q(t)‖∞ ≤ tol`.
///
/// Runs regardless of stability; an unstable or slow configuration comes
/// back with `converged = false` and the full trajectory.
pub fn simulate_dynamics<R: VoltVarRule>(
    model: &FeederModel,
    rules: &RuleSet<R>,
    scenario: &Scenario,
    opts: &DynamicsOptions,
) -> Result<DynamicsRun> {
    check_rules(model, rules)?;
    let n = model.bus_count();
    let inv = model.inverters();
    let v_tilde = scenario.v_tilde();
    let mut v = match &opts.v_init {
        Some(v0) => {
            if v0.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v0.len(),
                });
            }
            v0.clone()
        }
        None => v_tilde.clone(),
    };
    let mut q = DVector::zeros(inv.len());
    let mut trajectory = vec![DynamicsStep {
        v: v.clone(),
        q: q.clone(),
    }];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    // A custom start has no matching injections, so the first update says
    // nothing about convergence.
    let mut primed = opts.v_init.is_none();
    for _ in 0..opts.max_steps {
        let next = DVector::from_iterator(
            inv.len(),
            rules.rules().iter().zip(inv).map(|(r, &k)| r.eval(v[k])),
        );
        residual = linalg::inf_norm(&(&next - &q));
        q = next;
        v = model.x_cols() * &q + v_tilde;
        trajectory.push(DynamicsStep {
            v: v.clone(),
            q: q.clone(),
        });
        if !residual.is_finite() || (primed && residual <= opts.tol) {
            converged = residual.is_finite();
            break;
        }
        primed = true;
    }
    let spectral_norm = stability::spectral_norm(model.x_gg(), &rules.slopes())?;
    Ok(DynamicsRun {
        equilibrium: Equilibrium {
            q: q.iter().copied().collect(),
            v: v.iter().copied().collect(),
            method: Method::Dynamics,
            iterations: trajectory.len() - 1,
            residual,
        },
        trajectory,
        converged,
        spectral_norm,
    })
}

fn check_rules<R: VoltVarRule>(model: &FeederModel, rules: &RuleSet<R>) -> Result<()> {
    if rules.len() != model.inverter_count() {
        return Err(Error::DimensionMismatch {
            expected: model.inverter_count(),
            got: rules.len(),
        });
    }
    Ok(())
}

/// Hessian, linear term and per-coordinate penalties of the equilibrium
/// program.
pub fn equilibrium_program<R: VoltVarRule>(
    model: &FeederModel,
    rules: &RuleSet<R>,
    scenario: &Scenario,
) -> (DMatrix<f64>, DVector<f64>, Vec<crate::rules::EquilibriumTerm>) {
    let terms: Vec<_> = rules.rules().iter().map(|r| r.equilibrium_term()).collect();
    let mut h = model.x_gg().clone();
    for (k, t) in terms.iter().enumerate() {
        h[(k, k)] += t.hessian_diag;
    }
    let v_bar = DVector::from_iterator(rules.len(), rules.rules().iter().map(|r| r.v_bar()));
    let b = scenario.v_tilde_g(model) - v_bar;
    (h, b, terms)
}

/// Minimizes the equilibrium program by proximal gradient; `warm` seeds
/// the iterate.
pub fn solve_equilibrium<R: VoltVarRule>(
    model: &FeederModel,
    rules: &RuleSet<R>,
    scenario: &Scenario,
    opts: &QpOptions,
    warm: Option<&DVector<f64>>,
) -> Result<Equilibrium> {
    check_rules(model, rules)?;
    let (h, b, terms) = equilibrium_program(model, rules, scenario);
    let sol = qp::solve(&h, &b, &terms, warm, opts)?;
    let v = model.x_cols() * &sol.q + scenario.v_tilde();
    Ok(Equilibrium {
        q: sol.q.iter().copied().collect(),
        v: v.iter().copied().collect(),
        method: Method::Prox,
        iterations: sol.iterations,
        residual: sol.optimality,
    })
}

/// Equilibrium of symmetric rules via the convex program.
pub fn solve_equilibrium_qp(
    model: &FeederModel,
    rules: &RuleSet<RuleParams>,
    scenario: &Scenario,
    opts: &QpOptions,
) -> Result<Equilibrium> {
    solve_equilibrium(model, rules, scenario, opts, None)
}

/// Equilibrium of non-symmetric rules via the convex program with the
/// branch-wise penalty.
pub fn solve_equilibrium_nonsym(
    model: &FeederModel,
    rules: &RuleSet<NonSymRuleParams>,
    scenario: &Scenario,
    opts: &QpOptions,
) -> Result<Equilibrium> {
    solve_equilibrium(model, rules, scenario, opts, None)
}

/// Solves every scenario in parallel; results keep scenario order.
pub fn solve_batch<R: VoltVarRule>(
    model: &FeederModel,
    rules: &RuleSet<R>,
    scenarios: &[Scenario],
    opts: &QpOptions,
    warm: Option<&[Equilibrium]>,
) -> Result<Vec<Equilibrium>> {
    scenarios
        .par_iter()
        .enumerate()
        .map(|(s, sc)| {
            let w = warm.map(|w| w[s].q_vec());
            solve_equilibrium(model, rules, sc, opts, w.as_ref())
        })
        .collect()
}
