//! Closed-form ridge readout.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::tensor::{axpy, Matrix};

/// Linear readout `y = W_outᵀ s + bias`, `W_out` stored state-width × output-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWeights {
    pub w_out: Matrix,
    pub bias: Vec<f64>,
}

impl ReadoutWeights {
    pub fn apply(&self, state: &[f64]) -> Vec<f64> {
        let mut y = self.w_out.matvec_t(state);
        axpy(1.0, &self.bias, &mut y);
        y
    }
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows, m.cols, &m.data)
}

fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.set(r, c, m[(r, c)]);
        }
    }
    out
}

/// Solves `(SᵀS + λI) W = SᵀY` without forming `SᵀS`: Householder QR of
/// the stacked system `[S; √λ I] W ≈ [Y; 0]`. With `λ = 0` and fewer rows
/// than columns the minimum-norm interpolant is returned, provided `S` has
/// full row rank.
pub fn ridge_fit(states: &Matrix, targets: &Matrix, lambda: f64) -> Result<ReadoutWeights> {
    if states.rows != targets.rows {
        bail!(
            Argument,
            "ridge_fit: {} state rows vs {} target rows",
            states.rows,
            targets.rows
        );
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        bail!(Argument, "ridge_fit: lambda must be non-negative, got {lambda}");
    }
    if !states.is_finite() || !targets.is_finite() {
        bail!(Numeric, "ridge_fit: non-finite input");
    }
    let (n, p, o) = (states.rows, states.cols, targets.cols);
    let extra = if lambda > 0.0 { p } else { 0 };
    if n + extra < p {
        return min_norm_fit(states, targets);
    }
    let mut a = DMatrix::<f64>::zeros(n + extra, p);
    a.rows_mut(0, n).copy_from(&to_dmatrix(states));
    let mut b = DMatrix::<f64>::zeros(n + extra, o);
    b.rows_mut(0, n).copy_from(&to_dmatrix(targets));
    if extra > 0 {
        let root = libm::sqrt(lambda);
        for i in 0..p {
            a[(n + i, i)] = root;
        }
    }
    let qr = a.qr();
    let r = qr.r();
    rank_tolerance(&r, p, (n + extra).max(p))?;
    let mut qtb = b;
    qr.q_tr_mul(&mut qtb);
    let rhs = qtb.rows(0, p).into_owned();
    let w = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| crate::Error::Rank("ridge_fit: singular triangular factor".into()))?;
    if w.iter().any(|v| !v.is_finite()) {
        bail!(Numeric, "ridge_fit: non-finite solution");
    }
    Ok(ReadoutWeights {
        w_out: from_dmatrix(&w),
        bias: vec![0.0; o],
    })
}

fn rank_tolerance(r: &DMatrix<f64>, k: usize, dim: usize) -> Result<()> {
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = diag_max * f64::EPSILON * dim as f64;
    if (0..k).any(|i| !(r[(i, i)].abs() > tol)) {
        bail!(Rank, "ridge_fit: design matrix is rank deficient");
    }
    Ok(())
}

/// `W = Q R⁻ᵀ Y` from the thin QR factorization `Sᵀ = Q R`.
fn min_norm_fit(states: &Matrix, targets: &Matrix) -> Result<ReadoutWeights> {
    let (n, p) = (states.rows, states.cols);
    let qr = to_dmatrix(states).transpose().qr();
    let r = qr.r();
    rank_tolerance(&r, n, p)?;
    let z = r
        .transpose()
        .solve_lower_triangular(&to_dmatrix(targets))
        .ok_or_else(|| crate::Error::Rank("ridge_fit: singular triangular factor".into()))?;
    let w = qr.q() * z;
    if w.iter().any(|v| !v.is_finite()) {
        bail!(Numeric, "ridge_fit: non-finite solution");
    }
    Ok(ReadoutWeights {
        w_out: from_dmatrix(&w),
        bias: vec![0.0; targets.cols],
    })
}

/// Ridge fit with an intercept column appended to the states.
pub fn ridge_fit_with_bias(states: &Matrix, targets: &Matrix, lambda: f64) -> Result<ReadoutWeights> {
    let mut aug = Matrix::zeros(states.rows, states.cols + 1);
    for r in 0..states.rows {
        let row = aug.row_mut(r);
        row[..states.cols].copy_from_slice(states.row(r));
        row[states.cols] = 1.0;
    }
    let fit = ridge_fit(&aug, targets, lambda)?;
    let p = states.cols;
    let w_out = Matrix::from_vec(p, targets.cols, fit.w_out.data[..p * targets.cols].to_vec());
    let bias = fit.w_out.row(p).to_vec();
    Ok(ReadoutWeights { w_out, bias })
}
