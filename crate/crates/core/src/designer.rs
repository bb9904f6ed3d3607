//! Projected gradient descent over rule parameters.
//!
//! The cost is the average squared voltage deviation at the equilibria of
//! all scenarios. Its gradient follows from differentiating the fixed
//! point `q = f(X_GG q + ṽ_G; z)`:
//!
//! ```text
//! ∂q/∂z = (I − D X_GG)⁻¹ J,    D = diag(∂f/∂v),  J = ∂f/∂z
//! ∇F    = (1/S) Σ_s Jᵀ (I − X_GG D)⁻¹ X_{·G}ᵀ (v_s − 1)
//! ```
//!
//! which needs one `|G|×|G|` solve per scenario. Every iterate is the
//! output of a projection and therefore satisfies the stability polytope.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::vdm;
use crate::equilibrium::{solve_batch, Equilibrium};
use crate::error::{Error, Result};
use crate::feeder::{FeederModel, Scenario};
use crate::projection::{FeasibleSet, Projector};
use crate::qp::QpOptions;
use crate::rules::{RuleSet, VoltVarRule, DELTA_MAX, MIN_RAMP_WIDTH, SIGMA_MAX, V_BAR_MAX, V_BAR_MIN};
use crate::stability::{self, StabilityReport};

#[derive(Debug, Clone)]
pub struct DesignConfig {
    pub eps: f64,
    /// Initial PGD step `μ`.
    pub step: f64,
    pub rel_tol: f64,
    /// Stop once the cost falls below this value.
    pub cost_floor: f64,
    pub max_iters: usize,
    pub backtracking: bool,
    pub max_halvings: usize,
    /// Factor applied to the last accepted step to get the next trial step
    /// (with backtracking only); 1 keeps every trial at `step`.
    pub step_growth: f64,
    pub max_step: f64,
    /// Nesterov extrapolation with restart on cost increase.
    pub acceleration: bool,
    /// Number of starting points; the first is always `project(0)`.
    pub starts: usize,
    pub seed: u64,
    pub qp: QpOptions,
    pub record_timings: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            eps: 0.01,
            step: 0.1,
            rel_tol: 1e-6,
            cost_floor: 1e-12,
            max_iters: 1000,
            backtracking: true,
            max_halvings: 30,
            step_growth: 2.0,
            max_step: 1e12,
            acceleration: false,
            starts: 1,
            seed: 0,
            qp: QpOptions::default(),
            record_timings: false,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidConfig(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidConfig("rel_tol must be non-negative".into()));
        }
        if !(self.step_growth >= 1.0) || !(self.max_step >= self.step) {
            return Err(Error::InvalidConfig(
                "step_growth must be ≥ 1 and max_step ≥ step".into(),
            ));
        }
        if self.starts == 0 {
            return Err(Error::InvalidConfig("at least one start is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    RelativeChange,
    CostFloor,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    /// Step length that was accepted.
    pub step: f64,
    pub polytope_ok: bool,
    pub projection_iterations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub equilibrium_s: f64,
    pub gradient_s: f64,
    pub projection_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub eps: f64,
    /// Parameters per inverter (4 symmetric, 7 non-symmetric).
    pub params_per_inverter: usize,
    /// Cost at every iterate, starting with `z¹`.
    pub history: Vec<IterationRecord>,
    pub cost: f64,
    pub z: Vec<f64>,
    pub stop: StopReason,
    /// `‖z − project(z − μg)‖∞` at the final iterate.
    pub stationarity: f64,
    /// Largest condition number of `I − D X_GG` seen at the final iterate.
    pub condition_number: f64,
    pub equilibria: Vec<Equilibrium>,
    pub stability: StabilityReport,
    /// Final cost of every start, in start order.
    pub start_costs: Vec<f64>,
    pub best_start: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<Timings>,
}

impl DesignReport {
    pub fn costs(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.cost).collect()
    }

    pub fn rules<R: VoltVarRule>(&self, model: &FeederModel) -> Result<RuleSet<R>> {
        RuleSet::from_z(&self.z, model.q_hat())
    }
}

/// `F(z) = (1/2S) Σ_s ‖v_s − 1‖²` at the equilibria of `rules`.
pub fn cost<R: VoltVarRule>(
    model: &FeederModel,
    rules: &RuleSet<R>,
    scenarios: &[Scenario],
    opts: &QpOptions,
) -> Result<f64> {
    if scenarios.is_empty() {
        return Err(Error::NoScenarios);
    }
    let eqs = solve_batch(model, rules, scenarios, opts, None)?;
    Ok(equilibria_cost(&eqs))
}

/// Cost of already solved equilibria.
pub fn equilibria_cost(equilibria: &[Equilibrium]) -> f64 {
    let v: Vec<&[f64]> = equilibria.iter().map(|e| e.v.as_slice()).collect();
    vdm(&v)
}

#[derive(Debug, Clone)]
pub struct Gradient {
    pub g: Vec<f64>,
    /// Largest 2-norm condition number of `I − D X_GG` across scenarios.
    pub condition_number: f64,
}

/// Gradient of the cost at the given equilibria (one per scenario).
pub fn gradient<R: VoltVarRule>(
    model: &FeederModel,
    rules: &RuleSet<R>,
    equilibria: &[Equilibrium],
) -> Result<Gradient> {
    if equilibria.is_empty() {
        return Err(Error::NoScenarios);
    }
    let m = rules.len();
    let inv = model.inverters();
    let x_gg = model.x_gg();
    let x_cols = model.x_cols();
    let per_scenario: Vec<(Vec<f64>, f64)> = equilibria
        .par_iter()
        .map(|eq| {
            let mut partials = vec![0.0; R::PARAMS * m];
            let mut d = vec![0.0; m];
            let mut buf = vec![0.0; R::PARAMS];
            for (n, rule) in rules.rules().iter().enumerate() {
                d[n] = rule.partials_into(eq.v[inv[n]], &mut buf);
                for k in 0..R::PARAMS {
                    partials[k * m + n] = buf[k];
                }
            }
            let dev = DVector::from_iterator(eq.v.len(), eq.v.iter().map(|v| v - 1.0));
            let w = x_cols.transpose() * dev;
            // adjoint system: (I − D X_GG)ᵀ = I − X_GG D
            let mut sys = DMatrix::identity(m, m);
            for i in 0..m {
                for j in 0..m {
                    sys[(i, j)] -= x_gg[(i, j)] * d[j];
                }
            }
            let sv = sys.singular_values();
            let cond = sv.max() / sv.min();
            let u = sys.lu().solve(&w).ok_or(Error::SingularSystem)?;
            let mut g = vec![0.0; R::PARAMS * m];
            for k in 0..R::PARAMS {
                for n in 0..m {
                    g[k * m + n] = partials[k * m + n] * u[n];
                }
            }
            Ok((g, cond))
        })
        .collect::<Result<Vec<_>>>()?;
    let s = per_scenario.len() as f64;
    let mut g = vec![0.0; R::PARAMS * m];
    let mut condition_number = 1.0f64;
    for (gs, cond) in &per_scenario {
        for (a, b) in g.iter_mut().zip(gs) {
            *a += b;
        }
        condition_number = condition_number.max(*cond);
    }
    g.iter_mut().for_each(|a| *a /= s);
    Ok(Gradient {
        g,
        condition_number,
    })
}

/// Feasible set matching the rule family `R` on `model`.
pub fn feasible_set<R: VoltVarRule>(model: &FeederModel, eps: f64) -> Result<FeasibleSet> {
    FeasibleSet::new(model.x_gg(), model.q_hat(), eps, R::BRANCHES)
}

struct Run {
    report: DesignReport,
}

struct Evaluated {
    z: Vec<f64>,
    equilibria: Vec<Equilibrium>,
    cost: f64,
}

fn evaluate<R: VoltVarRule>(
    model: &FeederModel,
    scenarios: &[Scenario],
    z: Vec<f64>,
    warm: Option<&[Equilibrium]>,
    opts: &QpOptions,
) -> Result<Evaluated> {
    let rules = RuleSet::<R>::from_z(&z, model.q_hat())?;
    let equilibria = solve_batch(model, &rules, scenarios, opts, warm)?;
    let cost = equilibria_cost(&equilibria);
    Ok(Evaluated {
        z,
        equilibria,
        cost,
    })
}

fn polytope_ok<R: VoltVarRule>(model: &FeederModel, z: &[f64], eps: f64) -> Result<bool> {
    let rules = RuleSet::<R>::from_z(z, model.q_hat())?;
    Ok(stability::polytope_check(model.x_gg(), &rules.slopes(), eps)?.polytope_ok)
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn run_from<R: VoltVarRule>(
    model: &FeederModel,
    scenarios: &[Scenario],
    cfg: &DesignConfig,
    set: &FeasibleSet,
    start: &[f64],
) -> Result<Run> {
    let t_total = Instant::now();
    let mut timings = Timings::default();
    let mut projector = Projector::new(set.clone())?;

    let t = Instant::now();
    let first = projector.project(start)?;
    timings.projection_s += t.elapsed().as_secs_f64();
    let mut proj_iters = first.iterations;

    let t = Instant::now();
    let mut cur = evaluate::<R>(model, scenarios, first.z, None, &cfg.qp)?;
    timings.equilibrium_s += t.elapsed().as_secs_f64();

    let mut history = vec![IterationRecord {
        iteration: 0,
        cost: cur.cost,
        step: 0.0,
        polytope_ok: polytope_ok::<R>(model, &cur.z, cfg.eps)?,
        projection_iterations: proj_iters,
    }];
    let mut prev_z = cur.z.clone();
    let mut momentum = 1.0f64;
    let mut trial_step = cfg.step;
    let mut stop = StopReason::MaxIterations;
    let mut last_grad: Vec<f64>;
    let mut cond;

    if cur.cost < cfg.cost_floor {
        let rules = RuleSet::<R>::from_z(&cur.z, model.q_hat())?;
        let gr = gradient(model, &rules, &cur.equilibria)?;
        last_grad = gr.g;
        cond = gr.condition_number;
        stop = StopReason::CostFloor;
    } else {
        loop {
            let t = Instant::now();
            let rules = RuleSet::<R>::from_z(&cur.z, model.q_hat())?;
            let gr = gradient(model, &rules, &cur.equilibria)?;
            timings.gradient_s += t.elapsed().as_secs_f64();
            last_grad = gr.g.clone();
            cond = gr.condition_number;
            if history.len() > cfg.max_iters {
                break;
            }

            let base: Vec<f64> = if cfg.acceleration {
                let next_m = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                let beta = (momentum - 1.0) / next_m;
                momentum = next_m;
                cur.z
                    .iter()
                    .zip(&prev_z)
                    .map(|(a, b)| a + beta * (a - b))
                    .collect()
            } else {
                cur.z.clone()
            };

            let mut mu = trial_step;
            let mut accepted = None;
            let halvings = if cfg.backtracking { cfg.max_halvings } else { 0 };
            for _ in 0..=halvings {
                let trial: Vec<f64> = base.iter().zip(&gr.g).map(|(z, g)| z - mu * g).collect();
                let t = Instant::now();
                let p = projector.project(&trial)?;
                timings.projection_s += t.elapsed().as_secs_f64();
                proj_iters = p.iterations;
                let t = Instant::now();
                let cand = evaluate::<R>(model, scenarios, p.z, Some(&cur.equilibria), &cfg.qp)?;
                timings.equilibrium_s += t.elapsed().as_secs_f64();
                if !cfg.backtracking || cand.cost <= cur.cost {
                    accepted = Some(cand);
                    break;
                }
                mu *= 0.5;
            }
            if accepted.is_some() && cfg.backtracking {
                trial_step = (mu * cfg.step_growth).min(cfg.max_step);
            }
            let Some(next) = accepted else {
                if cfg.acceleration && momentum > 1.0 {
                    momentum = 1.0;
                    prev_z = cur.z.clone();
                    continue;
                }
                // No step decreased the cost: the iterate stays put, which
                // is a zero relative change.
                history.push(IterationRecord {
                    iteration: history.len(),
                    cost: cur.cost,
                    step: 0.0,
                    polytope_ok: polytope_ok::<R>(model, &cur.z, cfg.eps)?,
                    projection_iterations: proj_iters,
                });
                stop = StopReason::RelativeChange;
                break;
            };
            if cfg.acceleration && next.cost > cur.cost {
                momentum = 1.0;
            }

            let rel = (cur.cost - next.cost).abs() / cur.cost;
            prev_z = std::mem::replace(&mut cur, next).z;
            history.push(IterationRecord {
                iteration: history.len(),
                cost: cur.cost,
                step: mu,
                polytope_ok: polytope_ok::<R>(model, &cur.z, cfg.eps)?,
                projection_iterations: proj_iters,
            });
            if cur.cost < cfg.cost_floor {
                stop = StopReason::CostFloor;
                let rules = RuleSet::<R>::from_z(&cur.z, model.q_hat())?;
                let gr = gradient(model, &rules, &cur.equilibria)?;
                last_grad = gr.g;
                cond = gr.condition_number;
                break;
            }
            if rel <= cfg.rel_tol {
                stop = StopReason::RelativeChange;
                let rules = RuleSet::<R>::from_z(&cur.z, model.q_hat())?;
                let gr = gradient(model, &rules, &cur.equilibria)?;
                last_grad = gr.g;
                cond = gr.condition_number;
                break;
            }
        }
    }

    let trial: Vec<f64> = cur
        .z
        .iter()
        .zip(&last_grad)
        .map(|(z, g)| z - cfg.step * g)
        .collect();
    let stationarity = sup_dist(&cur.z, &projector.project(&trial)?.z);
    let rules = RuleSet::<R>::from_z(&cur.z, model.q_hat())?;
    let stability = stability::check(model.x_gg(), &rules.slopes(), cfg.eps)?;
    timings.total_s = t_total.elapsed().as_secs_f64();

    Ok(Run {
        report: DesignReport {
            eps: cfg.eps,
            params_per_inverter: R::PARAMS,
            history,
            cost: cur.cost,
            z: cur.z,
            stop,
            stationarity,
            condition_number: cond,
            equilibria: cur.equilibria,
            stability,
            start_costs: Vec::new(),
            best_start: 0,
            timings: cfg.record_timings.then_some(timings),
        },
    })
}

/// Random point of the parameter boxes, used for multi-start.
fn random_start<R: VoltVarRule>(set: &FeasibleSet, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = set.inverters();
    let mut z = vec![0.0; set.dim()];
    for n in 0..m {
        z[n] = rng.gen_range(V_BAR_MIN..=V_BAR_MAX);
        for b in 0..R::BRANCHES {
            let base = (1 + 3 * b) * m;
            let delta = rng.gen_range(0.0..=DELTA_MAX);
            z[base + n] = delta;
            z[base + m + n] = rng.gen_range(delta + MIN_RAMP_WIDTH..=SIGMA_MAX);
            let lb = set.c_lower()[n];
            z[base + 2 * m + n] = lb * rng.gen_range(1.0..10.0);
        }
    }
    z
}

/// Runs projected gradient descent from `project(start)`.
pub fn design_from<R: VoltVarRule>(
    model: &FeederModel,
    scenarios: &[Scenario],
    cfg: &DesignConfig,
    start: &[f64],
) -> Result<DesignReport> {
    cfg.validate()?;
    if scenarios.is_empty() {
        return Err(Error::NoScenarios);
    }
    let set = feasible_set::<R>(model, cfg.eps)?;
    let mut report = run_from::<R>(model, scenarios, cfg, &set, start)?.report;
    report.start_costs = vec![report.cost];
    Ok(report)
}

/// Designs rules of family `R` for `model` over `scenarios`.
pub fn design<R: VoltVarRule>(
    model: &FeederModel,
    scenarios: &[Scenario],
    cfg: &DesignConfig,
) -> Result<DesignReport> {
    cfg.validate()?;
    if scenarios.is_empty() {
        return Err(Error::NoScenarios);
    }
    let set = feasible_set::<R>(model, cfg.eps)?;
    let mut starts = vec![vec![0.0; set.dim()]];
    for k in 1..cfg.starts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
        starts.push(random_start::<R>(&set, &mut rng));
    }
    let runs: Vec<Run> = starts
        .par_iter()
        .map(|s| run_from::<R>(model, scenarios, cfg, &set, s))
        .collect::<Result<Vec<_>>>()?;
    let start_costs: Vec<f64> = runs.iter().map(|r| r.report.cost).collect();
    let best_start = start_costs
        .iter()
        .enumerate()
        .fold(0, |best, (k, c)| if *c < start_costs[best] { k } else { best });
    let mut report = runs.into_iter().nth(best_start).expect("at least one start").report;
    report.start_costs = start_costs;
    report.best_start = best_start;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{build_sensitivities, scenario_from_v_tilde, Topology};
    use crate::rules::{NonSymRuleParams, RuleParams};
    use approx::assert_abs_diff_eq;

    fn single_bus() -> FeederModel {
        build_sensitivities(&Topology::chain(1, 0.5, 1.0, 1.0))
            .unwrap()
            .with_all_inverters(1.0)
            .unwrap()
    }

    fn scen(m: &FeederModel, v: &[f64]) -> Scenario {
        scenario_from_v_tilde(m, DVector::from_column_slice(v)).unwrap()
    }

    #[test]
    fn cost_examples() {
        let m = single_bus();
        let opts = QpOptions::default();
        let flat = RuleSet::new(vec![RuleParams::new(1.0, 0.0, 0.1, 2.0, 1.0).unwrap()]).unwrap();
        assert_eq!(cost(&m, &flat, &[scen(&m, &[1.0])], &opts).unwrap(), 0.0);

        let wide = RuleSet::new(vec![RuleParams::new(1.0, 0.03, 0.1, 2.0, 1.0).unwrap()]).unwrap();
        assert_abs_diff_eq!(
            cost(&m, &wide, &[scen(&m, &[1.03])], &opts).unwrap(),
            4.5e-4,
            epsilon = 1e-15
        );

        let half = RuleSet::new(vec![RuleParams {
            v_bar: 1.0,
            delta: 0.0,
            sigma: 1.0,
            c: 2.0,
            q_hat: 1.0,
        }])
        .unwrap();
        let f = cost(&m, &half, &[scen(&m, &[1.05])], &opts).unwrap();
        assert_abs_diff_eq!(f, 0.5 / 900.0, epsilon = 1e-15);
    }

    #[test]
    fn gradient_vanishes_inside_deadbands() {
        let m = single_bus();
        let rules = RuleSet::new(vec![RuleParams::new(1.0, 0.03, 0.1, 2.0, 1.0).unwrap()]).unwrap();
        let s = [scen(&m, &[1.01]), scen(&m, &[0.99])];
        let eqs = solve_batch(&m, &rules, &s, &QpOptions::default(), None).unwrap();
        let g = gradient(&m, &rules, &eqs).unwrap();
        assert!(g.g.iter().all(|x| *x == 0.0));
        assert_eq!(g.condition_number, 1.0);
    }

    fn fd_check<R: VoltVarRule>(model: &FeederModel, rules: &RuleSet<R>, scenarios: &[Scenario]) {
        let opts = QpOptions {
            tol: 1e-13,
            ..Default::default()
        };
        let eqs = solve_batch(model, rules, scenarios, &opts, None).unwrap();
        let g = gradient(model, rules, &eqs).unwrap().g;
        let z = rules.to_z();
        let h = 1e-5;
        let mut fd = vec![0.0; z.len()];
        for k in 0..z.len() {
            let mut zp = z.clone();
            zp[k] += h;
            let mut zm = z.clone();
            zm[k] -= h;
            let rp = RuleSet::<R>::from_z(&zp, model.q_hat()).unwrap();
            let rm = RuleSet::<R>::from_z(&zm, model.q_hat()).unwrap();
            fd[k] = (cost(model, &rp, scenarios, &opts).unwrap()
                - cost(model, &rm, scenarios, &opts).unwrap())
                / (2.0 * h);
        }
        let scale = fd.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let err = sup_dist(&g, &fd);
        assert!(err <= 1e-4 * scale, "analytic {g:?} vs fd {fd:?}");
    }

    #[test]
    fn single_bus_gradient_matches_fd() {
        let m = single_bus();
        let rules = RuleSet::new(vec![RuleParams {
            v_bar: 1.0,
            delta: 0.0,
            sigma: 1.0,
            c: 2.0,
            q_hat: 1.0,
        }])
        .unwrap();
        fd_check(&m, &rules, &[scen(&m, &[1.05])]);
    }

    #[test]
    fn nonsym_gradient_matches_fd() {
        let m = build_sensitivities(&Topology::chain(3, 0.3, 0.4, 1.0))
            .unwrap()
            .with_all_inverters(0.5)
            .unwrap();
        let rule = NonSymRuleParams::from_q_bar(1.0, 0.01, 3.0, 0.03, 0.005, 4.0, 0.02, 0.5);
        let rules = RuleSet::new(vec![rule; 3]).unwrap();
        let s = [scen(&m, &[1.04, 1.06, 1.07]), scen(&m, &[0.97, 0.95, 0.94])];
        fd_check(&m, &rules, &s);
    }

    #[test]
    fn pgd_descends_and_stays_feasible() {
        let m = build_sensitivities(&Topology::chain(3, 0.3, 0.4, 1.0))
            .unwrap()
            .with_all_inverters(0.5)
            .unwrap();
        let s = [scen(&m, &[1.03, 1.05, 1.06]), scen(&m, &[1.0, 1.02, 1.04])];
        let report = design::<RuleParams>(&m, &s, &DesignConfig::default()).unwrap();
        let costs = report.costs();
        assert!(costs.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.history.iter().all(|h| h.polytope_ok));
        assert!(report.stability.spectral_ok && report.stability.polytope_ok);
        assert_ne!(report.stop, StopReason::MaxIterations);
        assert!(report.timings.is_none());
    }

    #[test]
    fn zero_gradient_start_terminates_after_one_step() {
        let m = single_bus();
        let s = [scen(&m, &[1.01])];
        let start = [1.0, 0.03, 0.1, 2.0];
        let report = design_from::<RuleParams>(&m, &s, &DesignConfig::default(), &start).unwrap();
        assert_eq!(report.history.len(), 2);
        assert_eq!(report.stop, StopReason::RelativeChange);
        for (a, b) in report.z.iter().zip(&start) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(report.cost, 5e-5, epsilon = 1e-15);
    }

    #[test]
    fn config_validation() {
        let bad = DesignConfig {
            eps: 1.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let bad = DesignConfig {
            step: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
