//! IEEE 1547 Volt/VAR curves.
//!
//! A symmetric rule is stored as `(v̄, δ, σ, c)` where `c = 1/α` is the
//! inverse slope of the affine segments and the saturation level is derived
//! as `q̄ = (σ − δ)/c`. Evaluated as a sum of four ramps:
//!
//! ```text
//! f(v) = (1/c)·[r(v−v̄−σ) − r(v−v̄−δ) + r(−v+v̄−δ) − r(−v+v̄−σ)]
//! ```
//!
//! Partial derivatives use step functions that make every partial equal
//! to the right-hand derivative in `v`: steps of `v − ·` fire at zero,
//! steps of `−v + ·` do not.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const V_BAR_MIN: f64 = 0.95;
pub const V_BAR_MAX: f64 = 1.05;
pub const DELTA_MAX: f64 = 0.03;
/// Minimum distance between deadband and saturation voltages.
pub const MIN_RAMP_WIDTH: f64 = 0.02;
pub const SIGMA_MAX: f64 = 0.18;

/// Ratio `q̂/p̄` of the IEEE 1547 default curve.
pub const DEFAULT_Q_RATIO: f64 = 0.44;
pub const DEFAULT_DELTA: f64 = 0.02;
pub const DEFAULT_SIGMA: f64 = 0.08;

const BOX_TOL: f64 = 1e-9;

#[inline]
fn ramp(x: f64) -> f64 {
    x.max(0.0)
}

/// Step of a ramp increasing in `v`; fires at zero.
#[inline]
fn step_rising(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Step of a ramp decreasing in `v`; silent at zero.
#[inline]
fn step_falling(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Per-coordinate terms of the convex program whose minimizer is the
/// equilibrium injection: a diagonal Hessian contribution plus the
/// piecewise function
///
/// ```text
/// φ(q) = κ⁺/2·q² + δ⁺·q   for q ≥ 0
///        κ⁻/2·q² − δ⁻·q   for q ≤ 0
/// ```
/// restricted to `lo ≤ q ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumTerm {
    pub hessian_diag: f64,
    pub kappa_p: f64,
    pub delta_p: f64,
    pub kappa_m: f64,
    pub delta_m: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Common interface of symmetric and non-symmetric curves.
pub trait VoltVarRule: Clone + Send + Sync + std::fmt::Debug {
    /// Number of entries each rule contributes to the design vector `z`.
    const PARAMS: usize;
    /// Number of `(δ, σ, c)` branches.
    const BRANCHES: usize;

    fn eval(&self, v: f64) -> f64;

    /// Largest affine slope `α`.
    fn slope(&self) -> f64;

    fn q_hat(&self) -> f64;

    fn v_bar(&self) -> f64;

    /// Writes `∂f/∂z_local` into `out` (length [`Self::PARAMS`]) and returns
    /// `∂f/∂v`.
    fn partials_into(&self, v: f64, out: &mut [f64]) -> f64;

    /// Local parameters in `z` order.
    fn params(&self) -> Vec<f64>;

    /// Rebuilds a rule from local parameters; only `c > 0` is enforced.
    fn from_params(params: &[f64], q_hat: f64) -> Result<Self>;

    fn equilibrium_term(&self) -> EquilibriumTerm;

    /// Voltages where the curve has a kink.
    fn breakpoints(&self) -> Vec<f64>;

    /// Checks the IEEE 1547 parameter boxes.
    fn validate(&self) -> Result<()>;
}

/// Odd-symmetric Volt/VAR curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleParams {
    pub v_bar: f64,
    pub delta: f64,
    pub sigma: f64,
    pub c: f64,
    pub q_hat: f64,
}

/// The five partial derivatives of a symmetric rule at one voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RulePartials {
    pub df_dv: f64,
    pub df_dvbar: f64,
    pub df_ddelta: f64,
    pub df_dsigma: f64,
    pub df_dc: f64,
}

impl RuleParams {
    /// Builds and validates a rule.
    pub fn new(v_bar: f64, delta: f64, sigma: f64, c: f64, q_hat: f64) -> Result<Self> {
        let rule = RuleParams {
            v_bar,
            delta,
            sigma,
            c,
            q_hat,
        };
        rule.validate()?;
        Ok(rule)
    }

    /// Builds a rule from the saturation level `q̄` instead of `c`.
    pub fn from_q_bar(v_bar: f64, delta: f64, sigma: f64, q_bar: f64, q_hat: f64) -> Result<Self> {
        if !(q_bar > 0.0) {
            return Err(Error::InvalidRule(format!("q_bar must be positive, got {q_bar}")));
        }
        Self::new(v_bar, delta, sigma, (sigma - delta) / q_bar, q_hat)
    }

    /// IEEE 1547 default curve: `v̄ = 1`, `δ = 0.02`, `σ = 0.08`,
    /// `q̄ = q̂ = 0.44·p̄`.
    pub fn ieee_default(p_bar: f64) -> Result<Self> {
        let q = DEFAULT_Q_RATIO * p_bar;
        Self::from_q_bar(1.0, DEFAULT_DELTA, DEFAULT_SIGMA, q, q)
    }

    pub fn q_bar(&self) -> f64 {
        (self.sigma - self.delta) / self.c
    }

    /// Slope `α = q̄/(σ − δ) = 1/c`.
    pub fn alpha(&self) -> f64 {
        1.0 / self.c
    }

    /// Ramp-sum evaluation.
    pub fn eval(&self, v: f64) -> f64 {
        let d = v - self.v_bar;
        (ramp(d - self.sigma) - ramp(d - self.delta) + ramp(-d - self.delta)
            - ramp(-d - self.sigma))
            / self.c
    }

    /// Piecewise evaluation of the same curve.
    pub fn eval_piecewise(&self, v: f64) -> f64 {
        let d = v - self.v_bar;
        if d > self.sigma {
            -self.q_bar()
        } else if d > self.delta {
            -(d - self.delta) / self.c
        } else if d >= -self.delta {
            0.0
        } else if d >= -self.sigma {
            -(d + self.delta) / self.c
        } else {
            self.q_bar()
        }
    }

    pub fn partials(&self, v: f64) -> RulePartials {
        let d = v - self.v_bar;
        let inv_c = 1.0 / self.c;
        let up_sigma = step_rising(d - self.sigma);
        let up_delta = step_rising(d - self.delta);
        let down_delta = step_falling(-d - self.delta);
        let down_sigma = step_falling(-d - self.sigma);
        let df_dv = inv_c * (up_sigma - up_delta - down_delta + down_sigma);
        RulePartials {
            df_dv,
            df_dvbar: -df_dv,
            df_ddelta: inv_c * (up_delta - down_delta),
            df_dsigma: inv_c * (down_sigma - up_sigma),
            df_dc: -self.eval(v) * inv_c,
        }
    }
}

impl VoltVarRule for RuleParams {
    const PARAMS: usize = 4;
    const BRANCHES: usize = 1;

    fn eval(&self, v: f64) -> f64 {
        RuleParams::eval(self, v)
    }

    fn slope(&self) -> f64 {
        self.alpha()
    }

    fn q_hat(&self) -> f64 {
        self.q_hat
    }

    fn v_bar(&self) -> f64 {
        self.v_bar
    }

    fn partials_into(&self, v: f64, out: &mut [f64]) -> f64 {
        let p = self.partials(v);
        out[0] = p.df_dvbar;
        out[1] = p.df_ddelta;
        out[2] = p.df_dsigma;
        out[3] = p.df_dc;
        p.df_dv
    }

    fn params(&self) -> Vec<f64> {
        vec![self.v_bar, self.delta, self.sigma, self.c]
    }

    fn from_params(params: &[f64], q_hat: f64) -> Result<Self> {
        if !(params[3] > 0.0) {
            return Err(Error::NonPositiveC(params[3]));
        }
        Ok(RuleParams {
            v_bar: params[0],
            delta: params[1],
            sigma: params[2],
            c: params[3],
            q_hat,
        })
    }

    fn equilibrium_term(&self) -> EquilibriumTerm {
        let q_bar = self.q_bar();
        EquilibriumTerm {
            hessian_diag: self.c,
            kappa_p: 0.0,
            delta_p: self.delta,
            kappa_m: 0.0,
            delta_m: self.delta,
            lo: -q_bar,
            hi: q_bar,
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![
            self.v_bar - self.sigma,
            self.v_bar - self.delta,
            self.v_bar + self.delta,
            self.v_bar + self.sigma,
        ]
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::NonPositiveC(self.c));
        }
        if !(self.q_hat > 0.0) {
            return Err(Error::InvalidRule(format!(
                "q_hat must be positive, got {}",
                self.q_hat
            )));
        }
        check_box("v_bar", self.v_bar, V_BAR_MIN, V_BAR_MAX)?;
        check_branch(self.delta, self.sigma, self.c, self.q_hat)
    }
}

fn check_box(name: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value < lo - BOX_TOL || value > hi + BOX_TOL || !value.is_finite() {
        return Err(Error::InvalidRule(format!(
            "{name} = {value} outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

fn check_branch(delta: f64, sigma: f64, c: f64, q_hat: f64) -> Result<()> {
    check_box("delta", delta, 0.0, DELTA_MAX)?;
    check_box("sigma", sigma, delta + MIN_RAMP_WIDTH, SIGMA_MAX)?;
    let q_bar = (sigma - delta) / c;
    check_box("q_bar", q_bar, 0.0, q_hat)
}

/// Volt/VAR curve whose upper (`v > v̄`) and lower (`v < v̄`) branches
/// carry their own deadband, inverse slope and saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonSymRuleParams {
    pub v_bar: f64,
    pub delta_p: f64,
    pub sigma_p: f64,
    pub c_p: f64,
    pub delta_m: f64,
    pub sigma_m: f64,
    pub c_m: f64,
    pub q_hat: f64,
}

impl NonSymRuleParams {
    /// Builds from `(δ, c, q̄)` per branch; `σ = q̄·c + δ`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_q_bar(
        v_bar: f64,
        delta_p: f64,
        c_p: f64,
        q_bar_p: f64,
        delta_m: f64,
        c_m: f64,
        q_bar_m: f64,
        q_hat: f64,
    ) -> Self {
        NonSymRuleParams {
            v_bar,
            delta_p,
            sigma_p: q_bar_p * c_p + delta_p,
            c_p,
            delta_m,
            sigma_m: q_bar_m * c_m + delta_m,
            c_m,
            q_hat,
        }
    }

    /// Degenerate non-symmetric rule with identical branches.
    pub fn symmetric(rule: &RuleParams) -> Self {
        NonSymRuleParams {
            v_bar: rule.v_bar,
            delta_p: rule.delta,
            sigma_p: rule.sigma,
            c_p: rule.c,
            delta_m: rule.delta,
            sigma_m: rule.sigma,
            c_m: rule.c,
            q_hat: rule.q_hat,
        }
    }

    pub fn q_bar_p(&self) -> f64 {
        (self.sigma_p - self.delta_p) / self.c_p
    }

    pub fn q_bar_m(&self) -> f64 {
        (self.sigma_m - self.delta_m) / self.c_m
    }

    pub fn eval(&self, v: f64) -> f64 {
        let d = v - self.v_bar;
        if d >= 0.0 {
            -(ramp(d - self.delta_p) - ramp(d - self.sigma_p)) / self.c_p
        } else {
            (ramp(-d - self.delta_m) - ramp(-d - self.sigma_m)) / self.c_m
        }
    }
}

/// Evaluates a non-symmetric rule.
pub fn eval_nonsym(rule: &NonSymRuleParams, v: f64) -> f64 {
    rule.eval(v)
}

impl VoltVarRule for NonSymRuleParams {
    const PARAMS: usize = 7;
    const BRANCHES: usize = 2;

    fn eval(&self, v: f64) -> f64 {
        NonSymRuleParams::eval(self, v)
    }

    fn slope(&self) -> f64 {
        1.0 / self.c_p.min(self.c_m)
    }

    fn q_hat(&self) -> f64 {
        self.q_hat
    }

    fn v_bar(&self) -> f64 {
        self.v_bar
    }

    /// Order: `(v̄, δ⁺, σ⁺, c⁺, δ⁻, σ⁻, c⁻)`.
    fn partials_into(&self, v: f64, out: &mut [f64]) -> f64 {
        let d = v - self.v_bar;
        out.iter_mut().for_each(|x| *x = 0.0);
        let q = self.eval(v);
        let df_dv = if d >= 0.0 {
            let up_delta = step_rising(d - self.delta_p);
            let up_sigma = step_rising(d - self.sigma_p);
            let inv = 1.0 / self.c_p;
            out[1] = inv * up_delta;
            out[2] = -inv * up_sigma;
            out[3] = -q * inv;
            -inv * (up_delta - up_sigma)
        } else {
            let down_delta = step_falling(-d - self.delta_m);
            let down_sigma = step_falling(-d - self.sigma_m);
            let inv = 1.0 / self.c_m;
            out[4] = -inv * down_delta;
            out[5] = inv * down_sigma;
            out[6] = -q * inv;
            -inv * (down_delta - down_sigma)
        };
        out[0] = -df_dv;
        df_dv
    }

    fn params(&self) -> Vec<f64> {
        vec![
            self.v_bar,
            self.delta_p,
            self.sigma_p,
            self.c_p,
            self.delta_m,
            self.sigma_m,
            self.c_m,
        ]
    }

    fn from_params(params: &[f64], q_hat: f64) -> Result<Self> {
        for &c in [params[3], params[6]].iter() {
            if !(c > 0.0) {
                return Err(Error::NonPositiveC(c));
            }
        }
        Ok(NonSymRuleParams {
            v_bar: params[0],
            delta_p: params[1],
            sigma_p: params[2],
            c_p: params[3],
            delta_m: params[4],
            sigma_m: params[5],
            c_m: params[6],
            q_hat,
        })
    }

    fn equilibrium_term(&self) -> EquilibriumTerm {
        EquilibriumTerm {
            // Injection (q > 0) happens below v̄, on the "−" branch.
            hessian_diag: 0.0,
            kappa_p: self.c_m,
            delta_p: self.delta_m,
            kappa_m: self.c_p,
            delta_m: self.delta_p,
            lo: -self.q_bar_p(),
            hi: self.q_bar_m(),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![
            self.v_bar - self.sigma_m,
            self.v_bar - self.delta_m,
            self.v_bar,
            self.v_bar + self.delta_p,
            self.v_bar + self.sigma_p,
        ]
    }

    fn validate(&self) -> Result<()> {
        if !(self.q_hat > 0.0) {
            return Err(Error::InvalidRule(format!(
                "q_hat must be positive, got {}",
                self.q_hat
            )));
        }
        for c in [self.c_p, self.c_m] {
            if !(c > 0.0) {
                return Err(Error::NonPositiveC(c));
            }
        }
        check_box("v_bar", self.v_bar, V_BAR_MIN, V_BAR_MAX)?;
        check_branch(self.delta_p, self.sigma_p, self.c_p, self.q_hat)?;
        check_branch(self.delta_m, self.sigma_m, self.c_m, self.q_hat)
    }
}

/// Rules for every inverter of a feeder, in inverter order.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet<R> {
    rules: Vec<R>,
}

impl<R: VoltVarRule> RuleSet<R> {
    /// Rejects zero-capability inverters and non-positive `c`. Box limits
    /// are left to [`RuleSet::validate`] so that slightly perturbed
    /// parameters can still be evaluated.
    pub fn new(rules: Vec<R>) -> Result<Self> {
        for (k, r) in rules.iter().enumerate() {
            if !(r.q_hat() > 0.0) {
                return Err(Error::ZeroCapability(format!("#{k}")));
            }
            R::from_params(&r.params(), r.q_hat())?;
        }
        Ok(RuleSet { rules })
    }

    pub fn rules(&self) -> &[R] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Stacks parameters block-wise: entry `k·|G| + n` holds parameter `k`
    /// of inverter `n`.
    pub fn to_z(&self) -> Vec<f64> {
        let m = self.rules.len();
        let mut z = vec![0.0; R::PARAMS * m];
        for (n, rule) in self.rules.iter().enumerate() {
            for (k, p) in rule.params().into_iter().enumerate() {
                z[k * m + n] = p;
            }
        }
        z
    }

    pub fn from_z(z: &[f64], q_hat: &[f64]) -> Result<Self> {
        let m = q_hat.len();
        if z.len() != R::PARAMS * m {
            return Err(Error::DimensionMismatch {
                expected: R::PARAMS * m,
                got: z.len(),
            });
        }
        let rules = (0..m)
            .map(|n| {
                let local: Vec<f64> = (0..R::PARAMS).map(|k| z[k * m + n]).collect();
                R::from_params(&local, q_hat[n])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rules)
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.rules.iter().map(|r| r.slope()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.rules.iter().try_for_each(|r| r.validate())
    }
}

impl RuleSet<RuleParams> {
    /// IEEE 1547 defaults for every inverter given its rating `p̄`.
    pub fn ieee_default(p_bar: &[f64]) -> Result<Self> {
        let rules = p_bar
            .iter()
            .map(|&p| RuleParams::ieee_default(p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rules)
    }
}

/// `α = q̄/(σ − δ)`.
pub fn slope(rule: &RuleParams) -> Result<f64> {
    if !(rule.c > 0.0) {
        return Err(Error::NonPositiveC(rule.c));
    }
    Ok(rule.alpha())
}

/// JSON record of a symmetric rule; `q_bar` is informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub bus: u64,
    pub v_bar: f64,
    pub delta: f64,
    pub sigma: f64,
    pub c: f64,
    #[serde(default, skip_deserializing)]
    pub q_bar: f64,
    pub q_hat: f64,
}

/// JSON record of a non-symmetric rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonSymRuleRecord {
    pub bus: u64,
    pub v_bar: f64,
    pub delta_p: f64,
    pub sigma_p: f64,
    pub c_p: f64,
    #[serde(default, skip_deserializing)]
    pub q_bar_p: f64,
    pub delta_m: f64,
    pub sigma_m: f64,
    pub c_m: f64,
    #[serde(default, skip_deserializing)]
    pub q_bar_m: f64,
    pub q_hat: f64,
}

impl RuleRecord {
    pub fn from_rule(bus: u64, r: &RuleParams) -> Self {
        RuleRecord {
            bus,
            v_bar: r.v_bar,
            delta: r.delta,
            sigma: r.sigma,
            c: r.c,
            q_bar: r.q_bar(),
            q_hat: r.q_hat,
        }
    }

    pub fn to_rule(&self) -> RuleParams {
        RuleParams {
            v_bar: self.v_bar,
            delta: self.delta,
            sigma: self.sigma,
            c: self.c,
            q_hat: self.q_hat,
        }
    }
}

impl NonSymRuleRecord {
    pub fn from_rule(bus: u64, r: &NonSymRuleParams) -> Self {
        NonSymRuleRecord {
            bus,
            v_bar: r.v_bar,
            delta_p: r.delta_p,
            sigma_p: r.sigma_p,
            c_p: r.c_p,
            q_bar_p: r.q_bar_p(),
            delta_m: r.delta_m,
            sigma_m: r.sigma_m,
            c_m: r.c_m,
            q_bar_m: r.q_bar_m(),
            q_hat: r.q_hat,
        }
    }

    pub fn to_rule(&self) -> NonSymRuleParams {
        NonSymRuleParams {
            v_bar: self.v_bar,
            delta_p: self.delta_p,
            sigma_p: self.sigma_p,
            c_p: self.c_p,
            delta_m: self.delta_m,
            sigma_m: self.sigma_m,
            c_m: self.c_m,
            q_hat: self.q_hat,
        }
    }
}
