//! Estimators for `Y ≈ W ×_0 X`.
//!
//! Inputs are stored one sample per row of `X` (`N × d_0`); outputs are stacked
//! along mode 0 of `Y` (`N × d_1 × ⋯ × d_p`). All estimators minimize
//! `‖W ×_0 X − Y‖²_F + γ‖W‖²_F`, under no constraint (RLS), a rank constraint on
//! the `d_0 × (d_1⋯d_p)` unfolding (LRR), or a multilinear-rank constraint on
//! `W` itself (HOLRR).

mod baseline;
mod holrr;
mod kernel;
mod kholrr;
mod model_io;

use crate::error::{Error, Result, Warning};
use crate::linalg;
use crate::tensor::{DenseTensor, Matrix};

pub use baseline::{klrr_fit, krls_fit, lrr_fit, rls_fit, KlrrPath, LinearFit, LrrPath};
pub use holrr::{holrr_fit, HolrrModel, HolrrSolver};
pub use kernel::{gram, kernel_vec, KernelSpec};
pub use kholrr::{kernel_dual_eigvecs, kholrr_fit, KernelHolrrModel, KernelHolrrSolver};
pub use model_io::{Model, MODEL_MAGIC};

/// Ridge weight used when none is given.
pub const DEFAULT_GAMMA: f64 = 1e-3;

/// Relative cut-off for pseudo-inverses of Gram-type matrices.
pub(crate) const PINV_TOL: f64 = 1e-12;

/// A fully specified HOLRR fit: data, ridge weight and target ranks
/// `(R_0, R_1, …, R_p)`.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub x: Matrix,
    pub y: DenseTensor,
    pub gamma: f64,
    pub ranks: Vec<usize>,
}

impl RegressionProblem {
    pub fn new(x: Matrix, y: DenseTensor, gamma: f64, ranks: Vec<usize>) -> Result<Self> {
        check_data(&x, &y)?;
        check_gamma(gamma)?;
        if ranks.len() != y.order() {
            return Err(Error::arg(format!(
                "need {} ranks (input mode plus {} output modes), got {}",
                y.order(),
                y.order() - 1,
                ranks.len()
            )));
        }
        if ranks.contains(&0) {
            return Err(Error::arg("ranks must be at least 1"));
        }
        Ok(Self { x, y, gamma, ranks })
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::arg(format!("ridge weight must be finite and ≥ 0, got {gamma}")));
    }
    Ok(())
}

pub(crate) fn check_data(x: &Matrix, y: &DenseTensor) -> Result<()> {
    if x.is_empty() {
        return Err(Error::arg("input matrix is empty"));
    }
    if y.order() < 2 {
        return Err(Error::arg(format!(
            "outputs must be stacked along mode 0 of an order ≥ 2 tensor, got shape {:?}",
            y.shape()
        )));
    }
    if y.shape()[0] != x.nrows() {
        return Err(Error::arg(format!(
            "X has {} rows but Y has {} samples",
            x.nrows(),
            y.shape()[0]
        )));
    }
    Ok(())
}

/// Solves `A Z = B` for symmetric PSD `A`, falling back to `A⁺ B` when the
/// Cholesky factorization fails.
pub(crate) fn psd_solve(a: &Matrix, b: &Matrix, context: &str, warnings: &mut Vec<Warning>) -> Result<Matrix> {
    match linalg::spd_solve(a, b) {
        Ok(z) => Ok(z),
        Err(Error::NotPositiveDefinite { .. }) => {
            warnings.push(Warning::PinvFallback {
                context: context.to_string(),
            });
            Ok(linalg::pinv(a, PINV_TOL)? * b)
        }
        Err(e) => Err(e),
    }
}

/// `XᵀX + γI`
pub(crate) fn ridge_normal(x: &Matrix, gamma: f64) -> Matrix {
    let mut m = x.transpose() * x;
    for i in 0..m.nrows() {
        m[(i, i)] += gamma;
    }
    m
}

/// `‖W ×_0 X − Y‖²_F + γ‖W‖²_F` for a regression tensor `W` of shape
/// `d_0 × d_1 × ⋯ × d_p`.
pub fn ridge_objective(w: &DenseTensor, x: &Matrix, y: &DenseTensor, gamma: f64) -> Result<f64> {
    let fit = w.mode_product(x, 0)?;
    let r = fit.sub(y)?.frobenius_norm();
    Ok(r * r + gamma * w.frobenius_norm().powi(2))
}

/// Output shape `d_1 × ⋯ × d_p` of a stacked output tensor.
pub(crate) fn output_shape(y: &DenseTensor) -> Vec<usize> {
    y.shape()[1..].to_vec()
}

/// Full spectrum of `Aᵀ B` (symmetrized), which is `YᵀPY` when `A = XᵀY`
/// and `B` is the ridge solution. Shared by LRR and its kernel variant.
pub(crate) fn projected_output_eig(xty: &Matrix, coef: &Matrix) -> Result<linalg::SymEigResult> {
    linalg::sym_eig(&linalg::symmetrize(&(xty.transpose() * coef)))
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::datagen::Rng;

    pub fn gaussian(rng: &mut Rng, r: usize, c: usize) -> Matrix {
        rng.normal_matrix(r, c)
    }

    /// `Y = W ×_0 X (+ noise)` with `W` a random Tucker tensor of the given ranks.
    pub fn problem(
        seed: u64,
        n: usize,
        d0: usize,
        out: &[usize],
        ranks: &[usize],
        noise: f64,
    ) -> (Matrix, DenseTensor, DenseTensor) {
        let mut rng = Rng::new(seed);
        let mut dims = vec![d0];
        dims.extend_from_slice(out);
        let w = crate::datagen::random_tucker(&dims, ranks, &mut rng)
            .unwrap()
            .reconstruct();
        let x = gaussian(&mut rng, n, d0);
        let mut y = w.mode_product(&x, 0).unwrap();
        for v in y.data_mut() {
            *v += noise * rng.normal();
        }
        (x, y, w)
    }
}
