//! Euclidean projection onto the feasible set of rule parameters.
//!
//! Per inverter `n` and per branch, the set requires
//!
//! ```text
//! 0.95 ≤ v̄ₙ ≤ 1.05      0 ≤ δₙ ≤ 0.03      δₙ + 0.02 ≤ σₙ ≤ 0.18
//! σₙ − δₙ ≤ q̂ₙ cₙ       cₙ ≥ (X·1)ₙ / (1 − ε)
//! X a ≤ (1 − ε)·1       aₙ cₙ ≥ 1
//! ```
//!
//! with an auxiliary vector `a` shared by the branches. The hyperbolic
//! constraint is written as the cone `‖(2, aₙ − cₙ)‖ ≤ aₙ + cₙ` (after
//! rescaling `aₙ` to the magnitude of `cₙ`) and the
//! whole projection is solved by an OSQP-style ADMM: one cached dense
//! factorization of `P + σI + ρAᵀA`, closed-form projections onto
//! intervals and 3-dimensional second-order cones.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::rules::{DELTA_MAX, MIN_RAMP_WIDTH, SIGMA_MAX, V_BAR_MAX, V_BAR_MIN};

/// Relative margin added when repairing round-off infeasibility.
const REPAIR_MARGIN: f64 = 1e-13;

/// Constraint data of the parameter set `Z_ε`.
#[derive(Debug, Clone)]
pub struct FeasibleSet {
    eps: f64,
    x_gg: DMatrix<f64>,
    q_hat: Vec<f64>,
    c_lower: Vec<f64>,
    branches: usize,
}

impl FeasibleSet {
    /// `branches` is 1 for symmetric rules and 2 for non-symmetric ones.
    pub fn new(x_gg: &DMatrix<f64>, q_hat: &[f64], eps: f64, branches: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidConfig(format!("eps must lie in [0, 1), got {eps}")));
        }
        if !(1..=2).contains(&branches) {
            return Err(Error::InvalidConfig(format!("unsupported branch count {branches}")));
        }
        let m = q_hat.len();
        if x_gg.nrows() != m || x_gg.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: x_gg.nrows(),
            });
        }
        if let Some(k) = q_hat.iter().position(|q| !(*q > 0.0)) {
            return Err(Error::ZeroCapability(format!("#{k}")));
        }
        let c_lower: Vec<f64> = (0..m).map(|n| x_gg.row(n).sum() / (1.0 - eps)).collect();
        if let Some(k) = c_lower.iter().position(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Infeasible(format!(
                "row {k} of X_GG has non-positive sum"
            )));
        }
        let set = FeasibleSet {
            eps,
            x_gg: x_gg.clone(),
            q_hat: q_hat.to_vec(),
            c_lower,
            branches,
        };
        let witness = set.witness();
        let viol = set.violation(&witness);
        if viol > 0.0 {
            return Err(Error::Infeasible(format!("witness violates constraints by {viol:e}")));
        }
        Ok(set)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn inverters(&self) -> usize {
        self.q_hat.len()
    }

    pub fn branches(&self) -> usize {
        self.branches
    }

    /// Length of the design vector `z`.
    pub fn dim(&self) -> usize {
        self.inverters() * (1 + 3 * self.branches)
    }

    /// Lower bound `(X·1)/(1 − ε)` on every inverse slope.
    pub fn c_lower(&self) -> &[f64] {
        &self.c_lower
    }

    fn idx_delta(&self, b: usize, n: usize) -> usize {
        (1 + 3 * b) * self.inverters() + n
    }

    fn idx_sigma(&self, b: usize, n: usize) -> usize {
        (2 + 3 * b) * self.inverters() + n
    }

    fn idx_c(&self, b: usize, n: usize) -> usize {
        (3 + 3 * b) * self.inverters() + n
    }

    /// Feasible point `v̄ = 1, δ = 0, σ = 0.18`, `c` large enough for every
    /// constraint.
    pub fn witness(&self) -> Vec<f64> {
        let m = self.inverters();
        let mut z = vec![0.0; self.dim()];
        for n in 0..m {
            z[n] = 1.0;
            for b in 0..self.branches {
                z[self.idx_delta(b, n)] = 0.0;
                z[self.idx_sigma(b, n)] = SIGMA_MAX;
                z[self.idx_c(b, n)] = self.c_lower[n].max(SIGMA_MAX / self.q_hat[n]);
            }
        }
        self.repair(&z)
    }

    /// Smallest admissible auxiliary value `aₙ = max_b 1/c_{b,n}`.
    fn min_aux(&self, z: &[f64], n: usize) -> f64 {
        (0..self.branches)
            .map(|b| 1.0 / z[self.idx_c(b, n)])
            .fold(0.0, f64::max)
    }

    /// `max_n Σ_m X_nm a_m` with the smallest admissible `a`.
    fn coupling(&self, z: &[f64]) -> f64 {
        let m = self.inverters();
        let a: Vec<f64> = (0..m).map(|n| self.min_aux(z, n)).collect();
        (0..m)
            .map(|n| (0..m).map(|k| self.x_gg[(n, k)] * a[k]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest constraint violation of `z`, using the direct form
    /// `Σ_m X_nm / c_m ≤ 1 − ε` of the coupling constraint.
    pub fn violation(&self, z: &[f64]) -> f64 {
        let m = self.inverters();
        let mut worst = 0.0f64;
        let mut bump = |v: f64| worst = worst.max(v);
        for n in 0..m {
            bump(V_BAR_MIN - z[n]);
            bump(z[n] - V_BAR_MAX);
            for b in 0..self.branches {
                let d = z[self.idx_delta(b, n)];
                let s = z[self.idx_sigma(b, n)];
                let c = z[self.idx_c(b, n)];
                bump(-d);
                bump(d - DELTA_MAX);
                bump(d + MIN_RAMP_WIDTH - s);
                bump(s - SIGMA_MAX);
                bump(s - d - self.q_hat[n] * c);
                bump(self.c_lower[n] - c);
                if !(c > 0.0) {
                    return f64::INFINITY;
                }
            }
        }
        if m > 0 {
            bump(self.coupling(z) - (1.0 - self.eps));
        }
        worst
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.violation(z) <= tol
    }

    /// Moves a nearly feasible point into the set by clamping boxes and
    /// scaling `c` up; displacement is of the order of the violation.
    pub fn repair(&self, z: &[f64]) -> Vec<f64> {
        let m = self.inverters();
        let mut out = z.to_vec();
        for n in 0..m {
            out[n] = out[n].clamp(V_BAR_MIN, V_BAR_MAX);
            for b in 0..self.branches {
                let (id, is, ic) = (self.idx_delta(b, n), self.idx_sigma(b, n), self.idx_c(b, n));
                let d = out[id].clamp(0.0, DELTA_MAX);
                let s = out[is].clamp(d + MIN_RAMP_WIDTH, SIGMA_MAX);
                let mut c = out[ic];
                let floor = self.c_lower[n].max((s - d) / self.q_hat[n]);
                if !(c >= floor * (1.0 + REPAIR_MARGIN)) {
                    c = c.max(floor * (1.0 + REPAIR_MARGIN));
                }
                out[id] = d;
                out[is] = s;
                out[ic] = c;
            }
        }
        if m > 0 {
            let ratio = self.coupling(&out) / (1.0 - self.eps);
            if ratio > 1.0 - REPAIR_MARGIN {
                let t = ratio * (1.0 + 4.0 * REPAIR_MARGIN);
                for n in 0..m {
                    for b in 0..self.branches {
                        out[self.idx_c(b, n)] *= t;
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdmmSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Residual tolerance; relative to the iterate magnitude once that
    /// exceeds 1.
    pub eps_abs: f64,
    /// Residual level still accepted when `max_iter` is reached.
    pub eps_accept: f64,
    pub max_iter: usize,
    /// Iterations between step-size adaptations.
    pub adapt_every: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-11,
            eps_accept: 1e-8,
            max_iter: 200_000,
            adapt_every: 25,
        }
    }
}

/// Result of one projection.
#[derive(Debug, Clone)]
pub struct Projection {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Largest `|λ_i|·slack_i` over constraints.
    pub complementarity: f64,
    /// Constraint violation of the returned point (after repair).
    pub violation: f64,
}

#[derive(Debug, Clone, Copy)]
enum RowKind {
    Interval(f64, f64),
    /// First row of a 3-row second-order cone.
    ConeHead,
    ConeTail,
}

/// Sparse constraint matrix in row-major triplets.
#[derive(Debug, Clone)]
struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
    cols: usize,
}

impl SparseRows {
    fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|r| r.iter().map(|(j, a)| a * x[*j]).sum::<f64>()),
        )
    }

    fn mul_t(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.cols);
        for (i, r) in self.rows.iter().enumerate() {
            for (j, a) in r {
                out[*j] += a * y[i];
            }
        }
        out
    }

    fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.cols, self.cols);
        for r in &self.rows {
            for (i, a) in r {
                for (j, b) in r {
                    g[(*i, *j)] += a * b;
                }
            }
        }
        g
    }
}

struct Problem {
    a: SparseRows,
    kinds: Vec<RowKind>,
    shift: DVector<f64>,
    /// Factor that was applied to each row.
    scale: DVector<f64>,
    aux_scale: Vec<f64>,
    n_var: usize,
    n_z: usize,
}

struct WarmState {
    y: DVector<f64>,
    s: DVector<f64>,
    lambda: DVector<f64>,
}

/// Stateful projector; consecutive calls warm-start from the previous
/// primal and dual iterates.
pub struct Projector {
    set: FeasibleSet,
    settings: AdmmSettings,
    problem: Problem,
    rho: f64,
    factor: Cholesky<f64, Dyn>,
    warm: Option<WarmState>,
}

impl std::fmt::Debug for Projector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Projector")
            .field("set", &self.set)
            .field("rho", &self.rho)
            .finish()
    }
}

/// Inverse slope per inverter that the auxiliary variable is scaled to.
fn reference_c(set: &FeasibleSet, z: &[f64]) -> Vec<f64> {
    (0..set.inverters())
        .map(|n| {
            (0..set.branches)
                .map(|b| z[set.idx_c(b, n)])
                .fold(f64::INFINITY, f64::min)
                .max(set.c_lower[n])
                .min(f64::MAX)
        })
        .collect()
}

/// Ratio beyond which the auxiliary scaling is rebuilt.
const RESCALE_RATIO: f64 = 8.0;

fn build_problem(set: &FeasibleSet, c_ref: &[f64]) -> Problem {
    let m = set.inverters();
    let n_z = set.dim();
    let n_var = n_z + m;
    let aux = |n: usize| n_z + n;
    // `â = s·a` with `s = c_ref²` keeps `â` and `c` on the same scale.
    let aux_scale: Vec<f64> = c_ref.iter().map(|c| c * c).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut kinds = Vec::new();
    let mut push = |row: Vec<(usize, f64)>, kind: RowKind| {
        rows.push(row);
        kinds.push(kind);
    };
    let inf = f64::INFINITY;
    for n in 0..m {
        push(vec![(n, 1.0)], RowKind::Interval(V_BAR_MIN, V_BAR_MAX));
        for b in 0..set.branches {
            let (d, s, c) = (set.idx_delta(b, n), set.idx_sigma(b, n), set.idx_c(b, n));
            push(vec![(d, 1.0)], RowKind::Interval(0.0, DELTA_MAX));
            push(vec![(s, 1.0)], RowKind::Interval(-inf, SIGMA_MAX));
            push(vec![(s, 1.0), (d, -1.0)], RowKind::Interval(MIN_RAMP_WIDTH, inf));
            push(
                vec![(c, set.q_hat[n]), (s, -1.0), (d, 1.0)],
                RowKind::Interval(0.0, inf),
            );
            push(vec![(c, 1.0)], RowKind::Interval(set.c_lower[n], inf));
        }
    }
    for n in 0..m {
        let row: Vec<(usize, f64)> = (0..m)
            .filter(|&k| set.x_gg[(n, k)] != 0.0)
            .map(|k| (aux(k), set.x_gg[(n, k)] / aux_scale[k]))
            .collect();
        push(row, RowKind::Interval(-inf, 1.0 - set.eps));
    }
    let first_cone = m * (2 + 5 * set.branches);
    for n in 0..m {
        for b in 0..set.branches {
            let c = set.idx_c(b, n);
            push(vec![(aux(n), 1.0), (c, 1.0)], RowKind::ConeHead);
            push(Vec::new(), RowKind::ConeTail);
            push(vec![(aux(n), 1.0), (c, -1.0)], RowKind::ConeTail);
        }
    }

    let n_rows = rows.len();
    let mut shift = DVector::zeros(n_rows);
    let mut cone_offset = Vec::new();
    for n in 0..m {
        for _ in 0..set.branches {
            cone_offset.push(2.0 * aux_scale[n].sqrt());
        }
    }
    let mut scale = DVector::from_element(n_rows, 1.0);
    for i in 0..first_cone {
        let norm = rows[i].iter().map(|(_, a)| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            scale[i] = 1.0 / norm;
        }
    }
    let cone_scale = 1.0 / 2f64.sqrt();
    for i in first_cone..n_rows {
        scale[i] = cone_scale;
        if (i - first_cone) % 3 == 1 {
            shift[i] = cone_offset[(i - first_cone) / 3] * cone_scale;
        }
    }
    for (i, row) in rows.iter_mut().enumerate() {
        for (_, a) in row.iter_mut() {
            *a *= scale[i];
        }
        if let RowKind::Interval(lo, hi) = kinds[i] {
            kinds[i] = RowKind::Interval(lo * scale[i], hi * scale[i]);
        }
    }
    Problem {
        a: SparseRows { rows, cols: n_var },
        kinds,
        shift,
        scale,
        aux_scale,
        n_var,
        n_z,
    }
}

fn project_soc(t: f64, x1: f64, x2: f64) -> (f64, f64, f64) {
    let nx = (x1 * x1 + x2 * x2).sqrt();
    if nx <= t {
        (t, x1, x2)
    } else if nx <= -t {
        (0.0, 0.0, 0.0)
    } else {
        let k = 0.5 * (t + nx);
        (k, k * x1 / nx, k * x2 / nx)
    }
}

impl Problem {
    /// Projection onto `K − shift`.
    fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut out = w.clone();
        let mut i = 0;
        while i < self.kinds.len() {
            match self.kinds[i] {
                RowKind::Interval(lo, hi) => {
                    out[i] = w[i].clamp(lo, hi);
                    i += 1;
                }
                RowKind::ConeHead => {
                    let (t, a, b) = project_soc(
                        w[i] + self.shift[i],
                        w[i + 1] + self.shift[i + 1],
                        w[i + 2] + self.shift[i + 2],
                    );
                    out[i] = t - self.shift[i];
                    out[i + 1] = a - self.shift[i + 1];
                    out[i + 2] = b - self.shift[i + 2];
                    i += 3;
                }
                RowKind::ConeTail => unreachable!("cone rows come in triples"),
            }
        }
        out
    }

    fn kkt(&self, rho: f64, sigma: f64) -> Result<Cholesky<f64, Dyn>> {
        let mut k = self.a.gram() * rho;
        for i in 0..self.n_var {
            k[(i, i)] += sigma + if i < self.n_z { 1.0 } else { 0.0 };
        }
        k.cholesky().ok_or(Error::SolverStalled {
            iterations: 0,
            primal: f64::NAN,
            dual: f64::NAN,
        })
    }
}

impl Projector {
    pub fn new(set: FeasibleSet) -> Result<Self> {
        Self::with_settings(set, AdmmSettings::default())
    }

    pub fn with_settings(set: FeasibleSet, settings: AdmmSettings) -> Result<Self> {
        let problem = build_problem(&set, &set.c_lower);
        let factor = problem.kkt(settings.rho, settings.sigma)?;
        Ok(Projector {
            set,
            settings,
            problem,
            rho: settings.rho,
            factor,
            warm: None,
        })
    }

    pub fn set(&self) -> &FeasibleSet {
        &self.set
    }

    /// Drops the warm-start cache.
    pub fn reset(&mut self) {
        self.warm = None;
    }

    fn cold_start(&self, x: &[f64]) -> WarmState {
        let z = self.set.repair(x);
        let m = self.set.inverters();
        let mut y = DVector::zeros(self.problem.n_var);
        for (k, v) in z.iter().enumerate() {
            y[k] = *v;
        }
        for n in 0..m {
            y[self.problem.n_z + n] = self.problem.aux_scale[n] * self.set.min_aux(&z, n);
        }
        let s = self.problem.project(&self.problem.a.mul(&y));
        WarmState {
            y,
            s,
            lambda: DVector::zeros(self.problem.kinds.len()),
        }
    }

    /// `argmin_{z ∈ Z_ε} ‖x − z‖²`.
    pub fn project(&mut self, x: &[f64]) -> Result<Projection> {
        let dim = self.set.dim();
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        let c_ref = reference_c(&self.set, x);
        let off_scale = c_ref
            .iter()
            .zip(&self.problem.aux_scale)
            .any(|(c, s)| (c / s.sqrt()).max(s.sqrt() / c) > RESCALE_RATIO);
        if off_scale {
            self.problem = build_problem(&self.set, &c_ref);
            self.factor = self.problem.kkt(self.rho, self.settings.sigma)?;
            self.warm = None;
        }
        let p = &self.problem;
        let st = self.settings;
        let mut q_lin = DVector::zeros(p.n_var);
        for k in 0..dim {
            q_lin[k] = -x[k];
        }
        let WarmState {
            mut y,
            mut s,
            mut lambda,
        } = match self.warm.take() {
            Some(w) => w,
            None => self.cold_start(x),
        };

        let inv_scale = p.scale.map(|v| 1.0 / v);
        let p_mul = |v: &DVector<f64>| {
            let mut out = v.clone();
            for k in dim..p.n_var {
                out[k] = 0.0;
            }
            out
        };

        let mut iterations = 0;
        let mut r_prim = f64::INFINITY;
        let mut r_dual = f64::INFINITY;
        let mut tol_prim = 1.0;
        let mut tol_dual = 1.0;
        while iterations < st.max_iter {
            iterations += 1;
            let rhs = &y * st.sigma - &q_lin + p.a.mul_t(&(&s * self.rho - &lambda));
            let y_tilde = self.factor.solve(&rhs);
            let s_tilde = p.a.mul(&y_tilde);
            y = &y_tilde * st.alpha + &y * (1.0 - st.alpha);
            let s_relaxed = &s_tilde * st.alpha + &s * (1.0 - st.alpha);
            let s_next = p.project(&(&s_relaxed + &lambda / self.rho));
            lambda += (&s_relaxed - &s_next) * self.rho;
            s = s_next;

            let check = iterations % st.adapt_every == 0 || iterations == 1;
            if !check {
                continue;
            }
            let ay = p.a.mul(&y);
            r_prim = (&ay - &s).component_mul(&inv_scale).amax();
            let py = p_mul(&y);
            let at_lambda = p.a.mul_t(&lambda);
            r_dual = (&py + &q_lin + &at_lambda).amax();
            let prim_scale = ay.amax().max(s.amax()).max(1e-12);
            let dual_scale = py.amax().max(at_lambda.amax()).max(q_lin.amax()).max(1e-12);
            tol_prim = prim_scale.max(1.0);
            tol_dual = dual_scale.max(1.0);
            if r_prim <= st.eps_abs * tol_prim && r_dual <= st.eps_abs * tol_dual {
                break;
            }
            let ratio = ((r_prim / prim_scale) / (r_dual / dual_scale).max(1e-300)).sqrt();
            let new_rho = (self.rho * ratio).clamp(1e-6, 1e6);
            if new_rho > 5.0 * self.rho || new_rho < 0.2 * self.rho {
                self.rho = new_rho;
                self.factor = p.kkt(self.rho, st.sigma)?;
            }
        }

        let converged = r_prim <= st.eps_accept * tol_prim && r_dual <= st.eps_accept * tol_dual;
        let complementarity = complementarity(p, &y, &lambda);
        self.warm = Some(WarmState {
            y: y.clone(),
            s,
            lambda,
        });
        if !converged {
            self.warm = None;
            return Err(Error::SolverStalled {
                iterations,
                primal: r_prim,
                dual: r_dual,
            });
        }
        let z = self.set.repair(&y.as_slice()[..dim]);
        let violation = self.set.violation(&z);
        Ok(Projection {
            z,
            iterations,
            primal_residual: r_prim,
            dual_residual: r_dual,
            complementarity,
            violation,
        })
    }
}

fn complementarity(p: &Problem, y: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
    let ay = p.a.mul(y);
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < p.kinds.len() {
        match p.kinds[i] {
            RowKind::Interval(lo, hi) => {
                let l = lambda[i] / p.scale[i];
                let v = ay[i] / p.scale[i];
                let slack = if l > 0.0 {
                    hi / p.scale[i] - v
                } else if l < 0.0 {
                    v - lo / p.scale[i]
                } else {
                    0.0
                };
                if slack.is_finite() {
                    worst = worst.max((l * slack).abs());
                }
                i += 1;
            }
            RowKind::ConeHead => {
                let dot: f64 = (0..3).map(|k| lambda[i + k] * (ay[i + k] + p.shift[i + k])).sum();
                worst = worst.max(dot.abs());
                i += 3;
            }
            RowKind::ConeTail => unreachable!(),
        }
    }
    worst
}

/// One-off projection without warm start.
pub fn project(set: &FeasibleSet, x: &[f64]) -> Result<Projection> {
    Projector::new(set.clone())?.project(x)
}
