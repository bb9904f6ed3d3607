//! Stability certificates for the closed-loop Volt/VAR dynamics.
//!
//! The dynamics `q ← f(X q + ṽ)` are stable when `‖diag(α)·X_GG‖₂ ≤ 1 − ε`.
//! A cheaper sufficient condition is the polytope
//!
//! ```text
//! X α ≤ (1 − ε)·1          (column sums of AX)
//! α ≤ (1 − ε) / (X·1)      (row sums of AX)
//! ```
//!
//! which implies the spectral bound through `‖M‖₂² ≤ ‖M‖₁·‖M‖∞`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Outcome of the stability checks for one slope vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub spectral_norm: f64,
    pub eps: f64,
    pub spectral_ok: bool,
    pub polytope_ok: bool,
    /// Rows where `(Xα)_n > 1 − ε`.
    pub violated_column_sum: Vec<usize>,
    /// Rows where `α_n > (1 − ε)/(X·1)_n`.
    pub violated_row_sum: Vec<usize>,
}

fn check_dims(x: &DMatrix<f64>, alpha: &[f64]) -> Result<()> {
    if x.nrows() != x.ncols() || x.nrows() != alpha.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: alpha.len(),
        });
    }
    Ok(())
}

/// `σ_max(diag(α)·X)`.
pub fn spectral_norm(x: &DMatrix<f64>, alpha: &[f64]) -> Result<f64> {
    check_dims(x, alpha)?;
    let mut ax = x.clone();
    for (i, a) in alpha.iter().enumerate() {
        ax.row_mut(i).scale_mut(*a);
    }
    Ok(linalg::spectral_norm(&ax))
}

/// Spectral-norm certificate; fills only the spectral fields.
pub fn spectral_check(x: &DMatrix<f64>, alpha: &[f64], eps: f64) -> Result<StabilityReport> {
    let norm = spectral_norm(x, alpha)?;
    Ok(StabilityReport {
        spectral_norm: norm,
        eps,
        spectral_ok: norm <= 1.0 - eps,
        polytope_ok: false,
        violated_column_sum: Vec::new(),
        violated_row_sum: Vec::new(),
    })
}

/// Polytopic certificate; fills only the polytope fields.
pub fn polytope_check(x: &DMatrix<f64>, alpha: &[f64], eps: f64) -> Result<StabilityReport> {
    check_dims(x, alpha)?;
    let a = DVector::from_column_slice(alpha);
    let bound = 1.0 - eps;
    let col = x * &a;
    let violated_column_sum: Vec<usize> = (0..alpha.len()).filter(|&n| col[n] > bound).collect();
    let violated_row_sum: Vec<usize> = (0..alpha.len())
        .filter(|&n| {
            let row_sum: f64 = x.row(n).sum();
            alpha[n] > bound / row_sum
        })
        .collect();
    Ok(StabilityReport {
        spectral_norm: f64::NAN,
        eps,
        spectral_ok: false,
        polytope_ok: violated_column_sum.is_empty() && violated_row_sum.is_empty(),
        violated_column_sum,
        violated_row_sum,
    })
}

/// Runs both certificates.
pub fn check(x: &DMatrix<f64>, alpha: &[f64], eps: f64) -> Result<StabilityReport> {
    let spectral = spectral_check(x, alpha, eps)?;
    let poly = polytope_check(x, alpha, eps)?;
    Ok(StabilityReport {
        spectral_norm: spectral.spectral_norm,
        spectral_ok: spectral.spectral_ok,
        ..poly
    })
}

/// Uniform slope bound `(1 − ε)/‖X·1‖∞`.
pub fn max_uniform_slope(x: &DMatrix<f64>, eps: f64) -> f64 {
    let worst = x
        .row_iter()
        .map(|r| r.sum())
        .fold(0.0, f64::max);
    if worst == 0.0 {
        return f64::INFINITY;
    }
    (1.0 - eps) / worst
}
