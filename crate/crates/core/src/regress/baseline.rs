//! Ridge regression and reduced-rank ridge regression on flattened outputs,
//! in primal (`X`) and dual (Gram matrix) form.

use crate::error::{Error, Result, Warning};
use crate::linalg::SymEigResult;
use crate::tensor::Matrix;

use super::{check_gamma, psd_solve, ridge_normal};

/// Coefficients of a linear (or dual) fit together with anything that went
/// wrong numerically along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coef: Matrix,
    pub warnings: Vec<Warning>,
}

fn check_rows(a: &Matrix, y: &Matrix, what: &str) -> Result<()> {
    if a.is_empty() || y.is_empty() {
        return Err(Error::arg(format!("{what}: empty input")));
    }
    if a.nrows() != y.nrows() {
        return Err(Error::arg(format!(
            "{what}: {} input rows but {} output rows",
            a.nrows(),
            y.nrows()
        )));
    }
    Ok(())
}

/// `W = (XᵀX + γI)⁻¹ XᵀY`. A singular normal matrix (possible only at
/// `γ = 0`) is handled with a pseudo-inverse, giving the minimum-norm
/// least-squares solution.
pub fn rls_fit(x: &Matrix, y: &Matrix, gamma: f64) -> Result<LinearFit> {
    check_rows(x, y, "ridge regression")?;
    check_gamma(gamma)?;
    let mut warnings = Vec::new();
    let coef = psd_solve(&ridge_normal(x, gamma), &(x.transpose() * y), "ridge normal equations", &mut warnings)?;
    Ok(LinearFit { coef, warnings })
}

/// Reduced-rank ridge regression for every rank at once: the ridge solution
/// and the spectrum of `YᵀPY` (`P` the ridge-hat matrix) are computed here,
/// and [`LrrPath::coef`] projects onto the leading output directions.
#[derive(Debug, Clone)]
pub struct LrrPath {
    rls: LinearFit,
    eig: SymEigResult,
}

impl LrrPath {
    pub fn new(x: &Matrix, y: &Matrix, gamma: f64) -> Result<Self> {
        let rls = rls_fit(x, y, gamma)?;
        // YᵀPY = (XᵀY)ᵀ (XᵀX + γI)⁻¹ XᵀY
        let eig = super::projected_output_eig(&(x.transpose() * y), &rls.coef)?;
        Ok(Self { rls, eig })
    }

    pub fn rls(&self) -> &LinearFit {
        &self.rls
    }

    pub fn output_dim(&self) -> usize {
        self.rls.coef.ncols()
    }

    /// `W_RLS V Vᵀ` with `V` the top `rank` eigenvectors of `YᵀPY`; the ridge
    /// solution itself once `rank` reaches the output dimension.
    pub fn coef(&self, rank: usize) -> Result<LinearFit> {
        project(&self.rls, &self.eig, rank)
    }
}

fn project(base: &LinearFit, eig: &SymEigResult, rank: usize) -> Result<LinearFit> {
    if rank == 0 {
        return Err(Error::arg("rank must be at least 1"));
    }
    if rank >= base.coef.ncols() {
        return Ok(base.clone());
    }
    let v = eig.vectors.columns(0, rank);
    Ok(LinearFit {
        coef: (&base.coef * v) * v.transpose(),
        warnings: base.warnings.clone(),
    })
}

pub fn lrr_fit(x: &Matrix, y: &Matrix, rank: usize, gamma: f64) -> Result<LinearFit> {
    if rank == 0 {
        return Err(Error::arg("rank must be at least 1"));
    }
    LrrPath::new(x, y, gamma)?.coef(rank)
}

/// Dual ridge coefficients `(K + γI)⁻¹ Y`; predictions are `k_xᵀ` times them.
pub fn krls_fit(k: &Matrix, y: &Matrix, gamma: f64) -> Result<LinearFit> {
    check_rows(k, y, "kernel ridge regression")?;
    if k.nrows() != k.ncols() {
        return Err(Error::arg("Gram matrix must be square"));
    }
    check_gamma(gamma)?;
    let mut kg = k.clone();
    for i in 0..kg.nrows() {
        kg[(i, i)] += gamma;
    }
    let mut warnings = Vec::new();
    let coef = psd_solve(&kg, y, "kernel ridge system", &mut warnings)?;
    Ok(LinearFit { coef, warnings })
}

/// Kernel analogue of [`LrrPath`]: the dual ridge coefficients are
/// post-multiplied by `V Vᵀ`, `V` the top eigenvectors of `YᵀK(K + γI)⁻¹Y`.
#[derive(Debug, Clone)]
pub struct KlrrPath {
    krls: LinearFit,
    eig: SymEigResult,
}

impl KlrrPath {
    pub fn new(k: &Matrix, y: &Matrix, gamma: f64) -> Result<Self> {
        let krls = krls_fit(k, y, gamma)?;
        let eig = super::projected_output_eig(&(k * y), &krls.coef)?;
        Ok(Self { krls, eig })
    }

    pub fn krls(&self) -> &LinearFit {
        &self.krls
    }

    pub fn coef(&self, rank: usize) -> Result<LinearFit> {
        project(&self.krls, &self.eig, rank)
    }
}

pub fn klrr_fit(k: &Matrix, y: &Matrix, rank: usize, gamma: f64) -> Result<LinearFit> {
    if rank == 0 {
        return Err(Error::arg("rank must be at least 1"));
    }
    KlrrPath::new(k, y, gamma)?.coef(rank)
}
