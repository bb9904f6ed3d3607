//! Proximal-gradient solver for box-constrained quadratic programs with a
//! separable piecewise-quadratic penalty:
//!
//! ```text
//! minimize  ½ qᵀ H q + bᵀ q + Σₙ φₙ(qₙ)   subject to  lo ≤ q ≤ hi
//! ```
//!
//! `φₙ` is described by an [`EquilibriumTerm`] (its `hessian_diag` field is
//! ignored here; callers fold it into `H`). After the first-order phase the
//! active set is read off the iterate and the reduced linear system is
//! solved exactly ("polishing"); the polished point is kept only if its
//! optimality residual is no worse.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rules::EquilibriumTerm;

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// Stop when `‖q − T(q)‖∞ ≤ tol` for the prox-gradient map `T`.
    pub tol: f64,
    pub max_iter: usize,
    /// Nesterov momentum with adaptive restart.
    pub accelerate: bool,
    pub polish: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            tol: 1e-10,
            max_iter: 100_000,
            accelerate: true,
            polish: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub q: DVector<f64>,
    pub iterations: usize,
    /// Prox-gradient fixed-point residual at `q` (before polishing).
    pub residual: f64,
    /// Subgradient optimality residual at the returned `q`.
    pub optimality: f64,
    pub polished: bool,
}

/// Term with no penalty and box `[-bound, bound]`.
pub fn box_term(bound: f64) -> EquilibriumTerm {
    EquilibriumTerm {
        hessian_diag: 0.0,
        kappa_p: 0.0,
        delta_p: 0.0,
        kappa_m: 0.0,
        delta_m: 0.0,
        lo: -bound,
        hi: bound,
    }
}

#[inline]
fn prox(t: &EquilibriumTerm, y: f64, step: f64) -> f64 {
    if y > step * t.delta_p {
        ((y - step * t.delta_p) / (1.0 + step * t.kappa_p)).min(t.hi)
    } else if y < -step * t.delta_m {
        ((y + step * t.delta_m) / (1.0 + step * t.kappa_m)).max(t.lo)
    } else {
        0.0
    }
}

/// Interval `∂(φ + box)(q)`.
fn subdifferential(t: &EquilibriumTerm, q: f64) -> (f64, f64) {
    // Points within round-off of a bound count as saturated.
    let at = |bound: f64| (q - bound).abs() <= 1e-12 * bound.abs().max(1.0);
    if q > 0.0 {
        let d = t.kappa_p * q + t.delta_p;
        if q >= t.hi || at(t.hi) {
            (d, f64::INFINITY)
        } else {
            (d, d)
        }
    } else if q < 0.0 {
        let d = t.kappa_m * q - t.delta_m;
        if q <= t.lo || at(t.lo) {
            (f64::NEG_INFINITY, d)
        } else {
            (d, d)
        }
    } else {
        let lo = if t.lo < 0.0 { -t.delta_m } else { f64::NEG_INFINITY };
        let hi = if t.hi > 0.0 { t.delta_p } else { f64::INFINITY };
        (lo, hi)
    }
}

/// Largest distance between `−∇` and the subdifferential over coordinates.
pub fn optimality_residual(
    h: &DMatrix<f64>,
    b: &DVector<f64>,
    terms: &[EquilibriumTerm],
    q: &DVector<f64>,
) -> f64 {
    let g = h * q + b;
    terms
        .iter()
        .enumerate()
        .map(|(n, t)| {
            let (lo, hi) = subdifferential(t, q[n]);
            let target = -g[n];
            if target < lo {
                lo - target
            } else if target > hi {
                target - hi
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

pub fn solve(
    h: &DMatrix<f64>,
    b: &DVector<f64>,
    terms: &[EquilibriumTerm],
    q0: Option<&DVector<f64>>,
    opts: &QpOptions,
) -> Result<QpSolution> {
    let n = b.len();
    if h.nrows() != n || h.ncols() != n || terms.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: terms.len(),
        });
    }
    if n == 0 {
        return Ok(QpSolution {
            q: DVector::zeros(0),
            iterations: 0,
            residual: 0.0,
            optimality: 0.0,
            polished: false,
        });
    }
    let lip = linalg::lambda_max_sym(h);
    let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };

    let map = |y: &DVector<f64>| -> DVector<f64> {
        let g = h * y + b;
        DVector::from_iterator(
            n,
            terms.iter().enumerate().map(|(k, t)| prox(t, y[k] - step * g[k], step)),
        )
    };

    let mut q = match q0 {
        Some(q0) => DVector::from_iterator(
            n,
            q0.iter().zip(terms).map(|(v, t)| v.clamp(t.lo, t.hi)),
        ),
        None => DVector::zeros(n),
    };
    let mut y = q.clone();
    let mut momentum = 1.0f64;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let next = map(&y);
        residual = linalg::inf_norm(&(&next - &y));
        if residual <= opts.tol {
            q = next;
            break;
        }
        if opts.accelerate {
            let restart = (&y - &next).dot(&(&next - &q)) > 0.0;
            if restart {
                momentum = 1.0;
                y = next.clone();
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                y = &next + (&next - &q) * ((momentum - 1.0) / t_next);
                momentum = t_next;
            }
        } else {
            y = next.clone();
        }
        q = next;
    }

    let mut optimality = optimality_residual(h, b, terms, &q);
    let mut polished = false;
    if opts.polish {
        if let Some(p) = polish(h, b, terms, &q) {
            let opt_p = optimality_residual(h, b, terms, &p);
            if opt_p <= optimality.max(1e-13) {
                q = p;
                optimality = opt_p;
                polished = true;
            }
        }
    }

    if residual > opts.tol && !(polished && optimality <= opts.tol) {
        return Err(Error::MaxIterations {
            solver: "prox-gradient QP",
            iterations,
            residual,
        });
    }
    Ok(QpSolution {
        q,
        iterations,
        residual,
        optimality,
        polished,
    })
}

#[derive(Clone, Copy)]
enum Regime {
    Fixed(f64),
    Positive,
    Negative,
}

/// Exact solve on the active set suggested by `q`.
fn polish(
    h: &DMatrix<f64>,
    b: &DVector<f64>,
    terms: &[EquilibriumTerm],
    q: &DVector<f64>,
) -> Option<DVector<f64>> {
    let tau = 1e-9;
    let regimes: Vec<Regime> = terms
        .iter()
        .zip(q.iter())
        .map(|(t, &v)| {
            if v.abs() <= tau {
                Regime::Fixed(0.0)
            } else if v >= t.hi - tau {
                Regime::Fixed(t.hi)
            } else if v <= t.lo + tau {
                Regime::Fixed(t.lo)
            } else if v > 0.0 {
                Regime::Positive
            } else {
                Regime::Negative
            }
        })
        .collect();
    let free: Vec<usize> = regimes
        .iter()
        .enumerate()
        .filter(|(_, r)| !matches!(r, Regime::Fixed(_)))
        .map(|(k, _)| k)
        .collect();
    let mut out = DVector::from_iterator(
        q.len(),
        regimes.iter().map(|r| match r {
            Regime::Fixed(v) => *v,
            _ => 0.0,
        }),
    );
    if free.is_empty() {
        return Some(out);
    }
    let m = free.len();
    let mut lhs = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    let fixed_part = h * &out;
    for (i, &fi) in free.iter().enumerate() {
        for (j, &fj) in free.iter().enumerate() {
            lhs[(i, j)] = h[(fi, fj)];
        }
        let t = &terms[fi];
        let (kappa, shift) = match regimes[fi] {
            Regime::Positive => (t.kappa_p, t.delta_p),
            _ => (t.kappa_m, -t.delta_m),
        };
        lhs[(i, i)] += kappa;
        rhs[i] = -b[fi] - fixed_part[fi] - shift;
    }
    let sol = lhs.lu().solve(&rhs)?;
    for (i, &fi) in free.iter().enumerate() {
        let t = &terms[fi];
        let v = sol[i];
        let ok = match regimes[fi] {
            Regime::Positive => v > 0.0 && v < t.hi,
            _ => v < 0.0 && v > t.lo,
        };
        if !ok {
            return None;
        }
        out[fi] = v;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_interior_minimum() {
        // 1.5 q² + 0.05 q  →  q = −1/60
        let h = DMatrix::from_element(1, 1, 3.0);
        let b = DVector::from_element(1, 0.05);
        let sol = solve(&h, &b, &[box_term(1.0)], None, &QpOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.q[0], -1.0 / 60.0, epsilon = 1e-15);
        assert!(sol.polished);
    }

    #[test]
    fn soft_threshold_kills_small_gradients() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![0.01, -0.02]);
        let mut t = box_term(1.0);
        t.delta_p = 0.05;
        t.delta_m = 0.05;
        let sol = solve(&h, &b, &[t, t], None, &QpOptions::default()).unwrap();
        assert_eq!(sol.q, DVector::zeros(2));
    }

    #[test]
    fn active_box() {
        let h = DMatrix::from_element(1, 1, 1.0);
        let b = DVector::from_element(1, 0.05);
        let sol = solve(&h, &b, &[box_term(0.02)], None, &QpOptions::default()).unwrap();
        assert_eq!(sol.q[0], -0.02);
    }

    #[test]
    fn plain_and_accelerated_agree() {
        let h = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.5, 1.0, 2.0, 0.3, 0.5, 0.3, 1.5]);
        let b = DVector::from_vec(vec![-0.4, 0.3, 0.05]);
        let mut t = box_term(0.15);
        t.delta_p = 0.02;
        t.delta_m = 0.01;
        t.kappa_p = 0.3;
        t.kappa_m = 0.7;
        let terms = [t, t, t];
        let slow = QpOptions {
            accelerate: false,
            polish: false,
            ..Default::default()
        };
        let a = solve(&h, &b, &terms, None, &QpOptions::default()).unwrap();
        let p = solve(&h, &b, &terms, None, &slow).unwrap();
        assert!(linalg::inf_norm(&(&a.q - &p.q)) < 1e-9);
        assert!(a.optimality < 1e-12);
    }
}
