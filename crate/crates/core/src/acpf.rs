//! Backward/forward sweep AC power flow for radial feeders.
//!
//! Each sweep accumulates branch currents from the leaves to the
//! substation and then updates voltages from the substation outwards:
//!
//! ```text
//! J_k = Σ_{j ∈ subtree(k)} conj(s_j / V_j)·(−1)     (s_j: net injection)
//! V_k = V_parent(k) − z_k J_k
//! ```

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{DynamicsStep, Equilibrium, Method};
use crate::error::{Error, Result};
use crate::feeder::{FeederModel, Scenario};
use crate::linalg;
use crate::rules::{RuleSet, VoltVarRule};

#[derive(Debug, Clone, Copy)]
pub struct AcOptions {
    /// Stop when no voltage moves by more than `tol` between sweeps.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for AcOptions {
    fn default() -> Self {
        AcOptions {
            tol: 1e-10,
            max_sweeps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcSolution {
    pub magnitude: Vec<f64>,
    /// Radians, relative to the substation.
    pub angle: Vec<f64>,
    /// Complex power entering each line at its parent end.
    pub flow_p: Vec<f64>,
    pub flow_q: Vec<f64>,
    /// Line loss per line (active part).
    pub loss_p: Vec<f64>,
    pub sweeps: usize,
    /// Largest complex power mismatch over buses.
    pub mismatch: f64,
}

impl AcSolution {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.magnitude
            .iter()
            .zip(&self.angle)
            .map(|(m, a)| Complex64::from_polar(*m, *a))
            .collect()
    }
}

/// Buses ordered so that every parent precedes its children.
fn parent_first(model: &FeederModel) -> Vec<usize> {
    let depth = model.depths();
    let mut order: Vec<usize> = (0..model.bus_count()).collect();
    order.sort_by_key(|&k| (depth[k], k));
    order
}

/// Solves the power flow for net injections `p + jq` (generation positive).
pub fn solve_ac(model: &FeederModel, p: &[f64], q: &[f64], opts: &AcOptions) -> Result<AcSolution> {
    let n = model.bus_count();
    if p.len() != n || q.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.len().min(q.len()),
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let parents = model.parents();
    let z: Vec<Complex64> = model
        .line_r()
        .iter()
        .zip(model.line_x())
        .map(|(r, x)| Complex64::new(*r, *x))
        .collect();
    let s: Vec<Complex64> = p.iter().zip(q).map(|(a, b)| Complex64::new(*a, *b)).collect();
    let v0 = Complex64::new(model.v0(), 0.0);
    let order = parent_first(model);

    let mut v = vec![v0; n];
    let mut j = vec![Complex64::new(0.0, 0.0); n];
    let mut sweeps = 0;
    loop {
        if sweeps == opts.max_sweeps {
            return Err(Error::Diverged(sweeps));
        }
        sweeps += 1;
        for k in 0..n {
            j[k] = -(s[k] / v[k]).conj();
        }
        for &k in order.iter().rev() {
            if let Some(par) = parents[k] {
                let jk = j[k];
                j[par] += jk;
            }
        }
        let mut change = 0.0f64;
        for &k in &order {
            let up = parents[k].map_or(v0, |par| v[par]);
            let next = up - z[k] * j[k];
            change = change.max((next - v[k]).norm());
            v[k] = next;
        }
        if !change.is_finite() || v.iter().any(|x| !(x.norm() > 0.0)) {
            return Err(Error::Diverged(sweeps));
        }
        if change <= opts.tol {
            break;
        }
    }

    // Currents consistent with the final voltages.
    for k in 0..n {
        j[k] = -(s[k] / v[k]).conj();
    }
    for &k in order.iter().rev() {
        if let Some(par) = parents[k] {
            let jk = j[k];
            j[par] += jk;
        }
    }
    let sending: Vec<Complex64> = (0..n)
        .map(|k| parents[k].map_or(v0, |par| v[par]) * j[k].conj())
        .collect();
    let loss: Vec<Complex64> = (0..n).map(|k| z[k] * j[k].norm_sqr()).collect();

    // Power into bus k = consumption + outgoing flows.
    let mut balance: Vec<Complex64> = (0..n).map(|k| sending[k] - loss[k] + s[k]).collect();
    for k in 0..n {
        if let Some(par) = parents[k] {
            balance[par] -= sending[k];
        }
    }
    let mismatch = balance.iter().map(|b| b.norm()).fold(0.0, f64::max);

    Ok(AcSolution {
        magnitude: v.iter().map(|x| x.norm()).collect(),
        angle: v.iter().map(|x| x.arg()).collect(),
        flow_p: sending.iter().map(|x| x.re).collect(),
        flow_q: sending.iter().map(|x| x.im).collect(),
        loss_p: loss.iter().map(|x| x.re).collect(),
        sweeps,
        mismatch,
    })
}

/// AC voltage magnitudes of a scenario with inverter injections `q_g`.
pub fn scenario_voltages(
    model: &FeederModel,
    scenario: &Scenario,
    q_g: &DVector<f64>,
    opts: &AcOptions,
) -> Result<DVector<f64>> {
    let p = scenario.p_net();
    let q = model.embed_inverter_q(q_g) - scenario.q_l();
    let sol = solve_ac(model, p.as_slice(), q.as_slice(), opts)?;
    Ok(DVector::from_vec(sol.magnitude))
}

#[derive(Debug, Clone)]
pub struct AcDynamicsOptions {
    pub max_steps: usize,
    /// Stop when `‖q(t+1) − q(t)‖∞` drops to this value.
    pub tol: f64,
    pub ac: AcOptions,
}

impl Default for AcDynamicsOptions {
    fn default() -> Self {
        AcDynamicsOptions {
            max_steps: 10_000,
            tol: 1e-9,
            ac: AcOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AcDynamicsRun {
    pub equilibrium: Equilibrium,
    pub trajectory: Vec<DynamicsStep>,
    pub converged: bool,
}

impl AcDynamicsRun {
    pub fn settling_steps(&self, band: f64) -> usize {
        crate::equilibrium::settling_steps(&self.trajectory, band)
    }

    pub fn into_result(self) -> Result<AcDynamicsRun> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged(self.trajectory.len() - 1))
        }
    }
}

/// Volt/VAR dynamics with the AC power flow as the voltage map.
///
/// Scenarios must carry their injections; a scenario built from `ṽ` alone
/// has nothing for the power flow to act on.
pub fn simulate_dynamics_ac<R: VoltVarRule>(
    model: &FeederModel,
    rules: &RuleSet<R>,
    scenario: &Scenario,
    opts: &AcDynamicsOptions,
) -> Result<AcDynamicsRun> {
    if rules.len() != model.inverter_count() {
        return Err(Error::DimensionMismatch {
            expected: model.inverter_count(),
            got: rules.len(),
        });
    }
    let inv = model.inverters();
    let mut q = DVector::zeros(inv.len());
    let mut v = scenario_voltages(model, scenario, &q, &opts.ac)?;
    let mut trajectory = vec![DynamicsStep {
        v: v.clone(),
        q: q.clone(),
    }];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_steps {
        let next = DVector::from_iterator(
            inv.len(),
            rules.rules().iter().zip(inv).map(|(r, &k)| r.eval(v[k])),
        );
        residual = linalg::inf_norm(&(&next - &q));
        q = next;
        v = scenario_voltages(model, scenario, &q, &opts.ac)?;
        trajectory.push(DynamicsStep {
            v: v.clone(),
            q: q.clone(),
        });
        if residual <= opts.tol {
            converged = true;
            break;
        }
    }
    Ok(AcDynamicsRun {
        equilibrium: Equilibrium {
            q: q.iter().copied().collect(),
            v: v.iter().copied().collect(),
            method: Method::Dynamics,
            iterations: trajectory.len() - 1,
            residual,
        },
        trajectory,
        converged,
    })
}
