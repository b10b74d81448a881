use crate::error::{Error, Result, Warning};
use crate::linalg::{self, SymEigResult};
use crate::tensor::{DenseTensor, Matrix};

use super::kernel::{gram, kernel_vec, KernelSpec};
use super::{check_data, check_gamma, psd_solve};

/// Eigenvalues of `K` at or below this fraction of the largest are treated as
/// zero when forming the dual eigenproblem.
const GRAM_RANK_TOL: f64 = 1e-10;

/// Top `r` eigenpairs of `(K + γI)⁻¹ Y_(0) Y_(0)ᵀ K`.
///
/// With `K = QΛQᵀ` restricted to its numerical range, the symmetric matrix
/// `D QᵀY YᵀQ D`, `D = Λ^{1/2}(Λ + γI)^{-1/2}`, has the same eigenvalues; an
/// eigenvector `z` maps back to `α = Q (Λ(Λ + γI))^{-1/2} z`. Columns are
/// returned with unit norm under the usual sign convention. At most rank(K)
/// pairs exist; `clamped` is set when fewer than `r` are returned.
pub fn kernel_dual_eigvecs(k: &Matrix, y: &Matrix, gamma: f64, r: usize) -> Result<SymEigResult> {
    check_gamma(gamma)?;
    let ke = linalg::sym_eig(&linalg::symmetrize(k))?;
    dual_from_spectrum(&ke, y, gamma, r)
}

fn dual_from_spectrum(ke: &SymEigResult, y: &Matrix, gamma: f64, r: usize) -> Result<SymEigResult> {
    if r == 0 {
        return Err(Error::arg("rank must be at least 1"));
    }
    if y.nrows() != ke.len() {
        return Err(Error::arg(format!(
            "Gram matrix is {0}×{0} but Y has {1} rows",
            ke.len(),
            y.nrows()
        )));
    }
    let rank = gram_rank(ke);
    if rank == 0 {
        return Err(Error::arg("Gram matrix is numerically zero"));
    }
    let q = ke.vectors.columns(0, rank);
    let lam = ke.values.rows(0, rank);
    let mut f = q.transpose() * y;
    for (i, mut row) in f.row_iter_mut().enumerate() {
        row *= (lam[i] / (lam[i] + gamma)).sqrt();
    }
    let e = linalg::sym_eig_top(&linalg::symmetrize(&(&f * f.transpose())), r)?;
    let mut z = e.vectors;
    for (i, mut row) in z.row_iter_mut().enumerate() {
        row /= (lam[i] * (lam[i] + gamma)).sqrt();
    }
    let mut alpha = q * z;
    for mut col in alpha.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    linalg::fix_signs(&mut alpha);
    Ok(SymEigResult {
        values: e.values,
        vectors: alpha,
        clamped: r > rank,
    })
}

fn gram_rank(ke: &SymEigResult) -> usize {
    let top = ke.values.get(0).copied().unwrap_or(0.0);
    ke.values
        .iter()
        .take_while(|&&v| v > GRAM_RANK_TOL * top && v > 0.0)
        .count()
}

/// A fitted kernel HOLRR estimator, `f(x) = C ×̄_0 k_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelHolrrModel {
    pub(crate) coeff: DenseTensor,
    pub(crate) train_inputs: Matrix,
    pub(crate) kernel: KernelSpec,
    pub(crate) gamma: f64,
    pub(crate) ranks: Vec<usize>,
    pub(crate) warnings: Vec<Warning>,
}

impl KernelHolrrModel {
    pub fn new(
        coeff: DenseTensor,
        train_inputs: Matrix,
        kernel: KernelSpec,
        gamma: f64,
        ranks: Vec<usize>,
        warnings: Vec<Warning>,
    ) -> Result<Self> {
        kernel.validate()?;
        if coeff.order() < 2 || coeff.shape()[0] != train_inputs.nrows() {
            return Err(Error::arg(format!(
                "coefficient tensor {:?} does not match {} training inputs",
                coeff.shape(),
                train_inputs.nrows()
            )));
        }
        if ranks.len() != coeff.order() {
            return Err(Error::arg("one rank per mode of the coefficient tensor is required"));
        }
        Ok(Self {
            coeff,
            train_inputs,
            kernel,
            gamma,
            ranks,
            warnings,
        })
    }

    pub fn coeff(&self) -> &DenseTensor {
        &self.coeff
    }

    pub fn train_inputs(&self) -> &Matrix {
        &self.train_inputs
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    pub fn input_dim(&self) -> usize {
        self.train_inputs.ncols()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.coeff.shape()[1..].to_vec()
    }

    pub fn predict(&self, x: &[f64]) -> Result<DenseTensor> {
        let kx = kernel_vec(&self.kernel, &self.train_inputs, x)?;
        self.coeff.mode_vector_product(kx.as_slice(), 0)
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<DenseTensor> {
        let kx = self.kernel.cross_gram(x, &self.train_inputs)?;
        self.coeff.mode_product(&kx, 0)
    }
}

/// Rank- and ridge-independent parts of a kernel HOLRR fit: the Gram matrix
/// spectrum and the output-mode spectra.
#[derive(Debug, Clone)]
pub struct KernelHolrrSolver {
    kernel: KernelSpec,
    x: Matrix,
    y: DenseTensor,
    k: Matrix,
    k_eig: SymEigResult,
    out_eig: Vec<SymEigResult>,
}

impl KernelHolrrSolver {
    pub fn new(kernel: KernelSpec, x: &Matrix, y: &DenseTensor) -> Result<Self> {
        check_data(x, y)?;
        let k = gram(x, &kernel)?;
        Self::with_gram(kernel, x, y, k)
    }

    /// Uses a precomputed Gram matrix of `x` under `kernel`.
    pub fn with_gram(kernel: KernelSpec, x: &Matrix, y: &DenseTensor, k: Matrix) -> Result<Self> {
        check_data(x, y)?;
        kernel.validate()?;
        if k.nrows() != x.nrows() || k.ncols() != x.nrows() {
            return Err(Error::arg(format!(
                "Gram matrix is {}×{} for {} inputs",
                k.nrows(),
                k.ncols(),
                x.nrows()
            )));
        }
        let k_eig = linalg::sym_eig(&linalg::symmetrize(&k))?;
        let out_eig = (1..y.order())
            .map(|i| linalg::sym_eig(&y.mode_gram(i)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kernel,
            x: x.clone(),
            y: y.clone(),
            k,
            k_eig,
            out_eig,
        })
    }

    pub fn gram(&self) -> &Matrix {
        &self.k
    }

    pub fn fit(&self, gamma: f64, ranks: &[usize]) -> Result<KernelHolrrModel> {
        check_gamma(gamma)?;
        let order = self.y.order();
        if ranks.len() != order {
            return Err(Error::arg(format!(
                "need {order} ranks (input mode plus {} output modes), got {}",
                order - 1,
                ranks.len()
            )));
        }
        if ranks.contains(&0) {
            return Err(Error::arg("ranks must be at least 1"));
        }
        let mut warnings = Vec::new();
        let mut used = Vec::with_capacity(order);
        for (mode, &requested) in ranks.iter().enumerate() {
            let cap = if mode == 0 {
                gram_rank(&self.k_eig).max(1)
            } else {
                self.y.shape()[mode]
            };
            let r = requested.min(cap);
            if r < requested {
                warnings.push(Warning::RankClamped { mode, requested, used: r });
            }
            used.push(r);
        }

        let y0 = self.y.unfold0().into_owned();
        let dual = dual_from_spectrum(&self.k_eig, &y0, gamma, used[0])?;
        let a = linalg::orthonormalize(&dual.vectors);

        // M = (AᵀK(K + γI)A)⁻¹ AᵀK
        let ka = &self.k * &a;
        let normal = linalg::symmetrize(&(ka.transpose() * &ka + gamma * (ka.transpose() * &a)));
        let m = psd_solve(&normal, &ka.transpose(), "dual core normal matrix", &mut warnings)?;

        let us: Vec<Matrix> = self
            .out_eig
            .iter()
            .zip(&used[1..])
            .map(|(e, &r)| e.vectors.columns(0, r).into_owned())
            .collect();
        // C = Y ×_0 AM ×_i U_iU_iᵀ, with the projections applied in the
        // small core coordinates.
        let mut g = self.y.clone();
        for (i, u) in us.iter().enumerate() {
            g = g.mode_product(&u.transpose(), i + 1)?;
        }
        let mut c = g.mode_product(&(a * m), 0)?;
        for (i, u) in us.iter().enumerate() {
            c = c.mode_product(u, i + 1)?;
        }
        KernelHolrrModel::new(c, self.x.clone(), self.kernel, gamma, used, warnings)
    }
}

/// Kernel HOLRR from the training inputs; see [`KernelHolrrSolver`] for
/// repeated fits.
pub fn kholrr_fit(
    kernel: KernelSpec,
    x: &Matrix,
    y: &DenseTensor,
    gamma: f64,
    ranks: &[usize],
) -> Result<KernelHolrrModel> {
    KernelHolrrSolver::new(kernel, x, y)?.fit(gamma, ranks)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::problem;
    use super::super::{holrr_fit, RegressionProblem};
    use super::*;
    use crate::datagen::Rng;

    #[test]
    fn zero_outputs_give_zero_coefficients() {
        let mut rng = Rng::new(1);
        let x = rng.normal_matrix(7, 3);
        let y = DenseTensor::zeros(&[7, 2, 2]).unwrap();
        let m = kholrr_fit(KernelSpec::Rbf { sigma: 1.0 }, &x, &y, 0.1, &[2, 1, 1]).unwrap();
        assert_eq!(m.coeff().frobenius_norm(), 0.0);
    }

    #[test]
    fn linear_kernel_matches_primal() {
        let (x, y, _) = problem(2, 15, 4, &[3, 4], &[3, 2, 3], 0.1);
        let mut rng = Rng::new(7);
        let xt = rng.normal_matrix(5, 4);
        for gamma in [1e-3, 0.5] {
            let ranks = [3, 2, 3];
            let primal = holrr_fit(&RegressionProblem::new(x.clone(), y.clone(), gamma, ranks.to_vec()).unwrap()).unwrap();
            let dual = kholrr_fit(KernelSpec::Linear, &x, &y, gamma, &ranks).unwrap();
            let p = primal.predict_batch(&xt).unwrap();
            let d = dual.predict_batch(&xt).unwrap();
            assert!(p.sub(&d).unwrap().frobenius_norm() <= 1e-6 * p.frobenius_norm());
            let v: Vec<f64> = xt.row(1).iter().copied().collect();
            let single = dual.predict(&v).unwrap();
            assert!(single.max_abs_diff(&d.slice0(1).unwrap()).unwrap() < 1e-10);
        }
    }

    #[test]
    fn dual_eigenvectors_transport_to_primal() {
        let (x, y, _) = problem(3, 12, 5, &[3, 3], &[3, 2, 2], 0.2);
        let gamma = 0.3;
        let y0 = y.unfold0().into_owned();
        let k = &x * x.transpose();
        let e = kernel_dual_eigvecs(&k, &y0, gamma, 3).unwrap();
        let mut m = x.transpose() * &x;
        for i in 0..5 {
            m[(i, i)] += gamma;
        }
        let t = linalg::spd_solve(&m, &(x.transpose() * &y0 * y0.transpose() * &x)).unwrap();
        for j in 0..3 {
            let u = x.transpose() * e.vectors.column(j);
            let res = (&t * &u - e.values[j] * &u).norm();
            assert!(res <= 1e-7 * u.norm(), "pair {j}: {res}");
        }
    }

    #[test]
    fn dual_eigenvectors_are_eigenvectors_of_nonsymmetric_product() {
        let mut rng = Rng::new(4);
        let x = rng.normal_matrix(9, 3);
        let spec = KernelSpec::Polynomial { degree: 2, offset: 1.0 };
        let k = gram(&x, &spec).unwrap();
        let y = rng.normal_matrix(9, 4);
        let gamma = 0.1;
        let e = kernel_dual_eigvecs(&k, &y, gamma, 2).unwrap();
        let mut kg = k.clone();
        for i in 0..9 {
            kg[(i, i)] += gamma;
        }
        let t = linalg::spd_solve(&kg, &(&y * y.transpose() * &k)).unwrap();
        for j in 0..2 {
            let a = e.vectors.column(j);
            assert!((&t * a - e.values[j] * a).norm() <= 1e-8 * e.values[0]);
        }
    }

    #[test]
    fn rank_is_clamped_to_gram_rank() {
        let mut rng = Rng::new(5);
        let x = rng.normal_matrix(8, 2);
        let y = DenseTensor::from_unfold0(&rng.normal_matrix(8, 4), &[8, 2, 2]).unwrap();
        let m = kholrr_fit(KernelSpec::Linear, &x, &y, 0.1, &[4, 2, 2]).unwrap();
        assert_eq!(m.ranks(), &[2, 2, 2]);
        assert_eq!(m.warnings(), &[Warning::RankClamped { mode: 0, requested: 4, used: 2 }]);
    }

    #[test]
    fn polynomial_kernel_interpolates_quadratic_map() {
        let mut rng = Rng::new(6);
        let x = rng.normal_matrix(40, 3);
        let w = rng.normal_matrix(9, 4);
        let feats = Matrix::from_fn(40, 9, |n, k| x[(n, k / 3)] * x[(n, k % 3)]);
        let y = DenseTensor::from_unfold0(&(feats * w), &[40, 2, 2]).unwrap();
        let spec = KernelSpec::Polynomial { degree: 2, offset: 0.0 };
        let m = kholrr_fit(spec, &x, &y, 0.0, &[40, 2, 2]).unwrap();
        let pred = m.predict_batch(&x).unwrap();
        assert!(pred.sub(&y).unwrap().frobenius_norm() <= 1e-6 * y.frobenius_norm());
    }
}
