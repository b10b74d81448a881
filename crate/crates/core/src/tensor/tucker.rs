use crate::error::{Error, Result, Warning};
use crate::linalg;

use super::{DenseTensor, Matrix};

/// Relative singular-value threshold used for rank detection.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

const ORTHONORMAL_TOL: f64 = 1e-10;

/// A Tucker decomposition `G ×_0 U_0 ×_1 U_1 ⋯ ×_{p-1} U_{p-1}` with
/// column-orthonormal factors.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFactors {
    core: DenseTensor,
    factors: Vec<Matrix>,
}

impl TuckerFactors {
    /// Checks that factor `i` is `d_i × R_i` with `R_i` the size of core mode
    /// `i`, that `R_i ≤ d_i`, and that every factor has orthonormal columns.
    pub fn new(core: DenseTensor, factors: Vec<Matrix>) -> Result<Self> {
        if factors.len() != core.order() {
            return Err(Error::arg(format!(
                "core of order {} needs {} factors, got {}",
                core.order(),
                core.order(),
                factors.len()
            )));
        }
        for (i, u) in factors.iter().enumerate() {
            let r = core.shape()[i];
            if u.ncols() != r {
                return Err(Error::arg(format!(
                    "factor {i} has {} columns but core mode {i} has size {r}",
                    u.ncols()
                )));
            }
            if u.nrows() < r {
                return Err(Error::arg(format!(
                    "factor {i} is {}×{r}; rank exceeds dimension",
                    u.nrows()
                )));
            }
            let dev = linalg::orthonormality_defect(u);
            if dev > ORTHONORMAL_TOL {
                return Err(Error::arg(format!(
                    "factor {i} columns are not orthonormal (max |UᵀU − I| = {dev:.3e})"
                )));
            }
        }
        Ok(Self { core, factors })
    }

    pub fn core(&self) -> &DenseTensor {
        &self.core
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.core.shape().to_vec()
    }

    /// Shape of the reconstructed tensor.
    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.nrows()).collect()
    }

    /// Applies the factors one mode at a time; no Kronecker product is formed.
    pub fn reconstruct(&self) -> DenseTensor {
        let mut t = self.core.clone();
        for (n, u) in self.factors.iter().enumerate() {
            t = t
                .mode_product(u, n)
                .expect("factor dimensions checked at construction");
        }
        t
    }

    pub fn into_parts(self) -> (DenseTensor, Vec<Matrix>) {
        (self.core, self.factors)
    }
}

/// Tucker reconstruction; see [`TuckerFactors::reconstruct`].
pub fn tucker_reconstruct(f: &TuckerFactors) -> DenseTensor {
    f.reconstruct()
}

/// Mode-`n` ranks: for each mode, the number of singular values of the
/// unfolding above `tol` times the largest one.
pub fn multilinear_rank(t: &DenseTensor, tol: f64) -> Result<Vec<usize>> {
    if !(tol > 0.0) {
        return Err(Error::arg(format!("rank tolerance must be positive, got {tol}")));
    }
    (0..t.order())
        .map(|n| {
            let sv = linalg::singular_values(&t.matricize(n)?);
            let top = sv.iter().cloned().fold(0.0, f64::max);
            Ok(sv.iter().filter(|&&s| s > tol * top).count())
        })
        .collect()
}

/// Truncated higher-order SVD. Factor `i` holds the leading `R_i` left
/// singular vectors of `T_(i)`; the core is `T ×_0 U_0ᵀ ⋯ ×_{p-1} U_{p-1}ᵀ`.
/// Ranks above the corresponding dimension are clamped and reported.
pub fn hosvd_truncated(t: &DenseTensor, ranks: &[usize]) -> Result<(TuckerFactors, Vec<Warning>)> {
    if ranks.len() != t.order() {
        return Err(Error::arg(format!(
            "order-{} tensor needs {} ranks, got {}",
            t.order(),
            t.order(),
            ranks.len()
        )));
    }
    if ranks.contains(&0) {
        return Err(Error::arg("ranks must be at least 1"));
    }
    let mut warnings = Vec::new();
    let mut factors = Vec::with_capacity(t.order());
    for (n, &requested) in ranks.iter().enumerate() {
        let d = t.shape()[n];
        let r = requested.min(d);
        if r < requested {
            warnings.push(Warning::RankClamped {
                mode: n,
                requested,
                used: r,
            });
        }
        let (_, u) = linalg::left_singular_vectors(&t.matricize(n)?);
        factors.push(u.columns(0, r).into_owned());
    }
    let mut core = t.clone();
    for (n, u) in factors.iter().enumerate() {
        core = core.mode_product(&u.transpose(), n)?;
    }
    Ok((TuckerFactors::new(core, factors)?, warnings))
}
