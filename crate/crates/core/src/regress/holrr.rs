use crate::error::{Error, Result, Warning};
use crate::linalg::{self, SymEigResult};
use crate::tensor::{DenseTensor, Matrix, TuckerFactors};

use super::{check_data, check_gamma, output_shape, psd_solve, RegressionProblem, PINV_TOL};

/// A fitted HOLRR estimator: the regression tensor `W` in Tucker form.
#[derive(Debug, Clone, PartialEq)]
pub struct HolrrModel {
    pub(crate) factors: TuckerFactors,
    pub(crate) gamma: f64,
    pub(crate) warnings: Vec<Warning>,
}

impl HolrrModel {
    pub fn new(factors: TuckerFactors, gamma: f64, warnings: Vec<Warning>) -> Result<Self> {
        if factors.core().order() < 2 {
            return Err(Error::arg("regression tensor needs an input mode and at least one output mode"));
        }
        Ok(Self {
            factors,
            gamma,
            warnings,
        })
    }

    pub fn factors(&self) -> &TuckerFactors {
        &self.factors
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Ranks actually used, after any clamping.
    pub fn ranks(&self) -> Vec<usize> {
        self.factors.ranks()
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    pub fn input_dim(&self) -> usize {
        self.factors.factors()[0].nrows()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.factors.shape()[1..].to_vec()
    }

    /// The full `d_0 × d_1 × ⋯ × d_p` regression tensor.
    pub fn regression_tensor(&self) -> DenseTensor {
        self.factors.reconstruct()
    }

    /// `W ×̄_0 x`, evaluated factor-wise as `G ×̄_0 (U_0ᵀx) ×_1 U_1 ⋯`.
    pub fn predict(&self, x: &[f64]) -> Result<DenseTensor> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.input_dim()],
                found: vec![x.len()],
            });
        }
        let fs = self.factors.factors();
        let z = fs[0].tr_mul(&nalgebra::DVector::from_column_slice(x));
        let mut t = self.factors.core().mode_vector_product(z.as_slice(), 0)?;
        for (i, u) in fs[1..].iter().enumerate() {
            t = t.mode_product(u, i)?;
        }
        Ok(t)
    }

    /// Predictions for every row of `x`, stacked along mode 0.
    pub fn predict_batch(&self, x: &Matrix) -> Result<DenseTensor> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: vec![x.nrows(), self.input_dim()],
                found: vec![x.nrows(), x.ncols()],
            });
        }
        let fs = self.factors.factors();
        let mut t = self.factors.core().mode_product(&(x * &fs[0]), 0)?;
        for (i, u) in fs.iter().enumerate().skip(1) {
            t = t.mode_product(u, i)?;
        }
        Ok(t)
    }
}

/// The rank- and ridge-independent parts of a HOLRR fit, computed once per
/// training set so that a grid of `(γ, ranks)` can be fitted cheaply.
#[derive(Debug, Clone)]
pub struct HolrrSolver {
    n: usize,
    xtx: Matrix,
    /// `XᵀY_(0)`, also viewed as the tensor `Y ×_0 Xᵀ`.
    xty: DenseTensor,
    /// `XᵀY_(0) (XᵀY_(0))ᵀ`
    s0: Matrix,
    /// Full spectrum of `Y_(i) Y_(i)ᵀ` for each output mode.
    out_eig: Vec<SymEigResult>,
}

impl HolrrSolver {
    pub fn new(x: &Matrix, y: &DenseTensor) -> Result<Self> {
        check_data(x, y)?;
        let xty = y.mode_product(&x.transpose(), 0)?;
        let xty_mat = xty.unfold0().into_owned();
        let s0 = linalg::symmetrize(&(&xty_mat * xty_mat.transpose()));
        let out_eig = (1..y.order())
            .map(|i| linalg::sym_eig(&y.mode_gram(i)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n: x.nrows(),
            xtx: x.transpose() * x,
            xty,
            s0,
            out_eig,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.xtx.nrows()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        output_shape(&self.xty)
    }

    pub fn fit(&self, gamma: f64, ranks: &[usize]) -> Result<HolrrModel> {
        check_gamma(gamma)?;
        let order = self.xty.order();
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
        let d0 = self.input_dim();
        let mut used = Vec::with_capacity(order);
        for (mode, &requested) in ranks.iter().enumerate() {
            let cap = if mode == 0 {
                d0.min(self.n)
            } else {
                self.xty.shape()[mode]
            };
            let r = requested.min(cap);
            if r < requested {
                warnings.push(Warning::RankClamped { mode, requested, used: r });
            }
            used.push(r);
        }

        let mut m0 = self.xtx.clone();
        for i in 0..d0 {
            m0[(i, i)] += gamma;
        }
        let pencil = match linalg::gen_sym_eig_top(&self.s0, &m0, used[0]) {
            Ok(e) => e,
            Err(Error::NotPositiveDefinite { .. }) => {
                warnings.push(Warning::PinvFallback {
                    context: "input-mode eigenproblem".into(),
                });
                linalg::gen_sym_eig_top_semidefinite(&self.s0, &m0, used[0], PINV_TOL)?
            }
            Err(e) => return Err(e),
        };
        let u0 = linalg::orthonormalize(&pencil.vectors);

        let mut factors = Vec::with_capacity(order);
        factors.push(u0);
        for (eig, &r) in self.out_eig.iter().zip(&used[1..]) {
            factors.push(eig.vectors.columns(0, r).into_owned());
        }

        // G = (Y ×_0 Xᵀ) ×_0 (U_0ᵀ M U_0)⁻¹ U_0ᵀ ×_1 U_1ᵀ ⋯ ×_p U_pᵀ
        let mut g = self.xty.clone();
        for (i, u) in factors.iter().enumerate().skip(1) {
            g = g.mode_product(&u.transpose(), i)?;
        }
        let u0 = &factors[0];
        let small = linalg::symmetrize(&(u0.transpose() * &m0 * u0));
        let proj = psd_solve(&small, &u0.transpose(), "core normal matrix", &mut warnings)?;
        let g = g.mode_product(&proj, 0)?;

        HolrrModel::new(TuckerFactors::new(g, factors)?, gamma, warnings)
    }
}

/// Fits HOLRR in one go; see [`HolrrSolver`] for repeated fits on one
/// training set.
pub fn holrr_fit(prob: &RegressionProblem) -> Result<HolrrModel> {
    HolrrSolver::new(&prob.x, &prob.y)?.fit(prob.gamma, &prob.ranks)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::problem;
    use super::super::{ridge_objective, rls_fit};
    use super::*;
    use crate::datagen::Rng;
    use crate::tensor::{multilinear_rank, DEFAULT_RANK_TOL};

    fn fit(x: &Matrix, y: &DenseTensor, gamma: f64, ranks: &[usize]) -> HolrrModel {
        holrr_fit(&RegressionProblem::new(x.clone(), y.clone(), gamma, ranks.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn zero_outputs_give_zero_model() {
        let mut rng = Rng::new(1);
        let x = rng.normal_matrix(8, 3);
        let y = DenseTensor::zeros(&[8, 2, 3]).unwrap();
        let m = fit(&x, &y, 0.1, &[2, 2, 2]);
        assert_eq!(m.factors().core().frobenius_norm(), 0.0);
        assert_eq!(m.predict(&[1.0, -2.0, 0.5]).unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn interpolates_noiseless_data() {
        let (x, y, _) = problem(3, 12, 5, &[4, 3, 4], &[3, 2, 2, 3], 0.0);
        let m = fit(&x, &y, 0.0, &[3, 2, 2, 3]);
        let pred = m.predict_batch(&x).unwrap();
        assert!(pred.sub(&y).unwrap().frobenius_norm() <= 1e-7 * y.frobenius_norm());
        for n in [0, 7] {
            let yn = y.slice0(n).unwrap();
            let p = m.predict(x.row(n).transpose().as_slice()).unwrap();
            assert!(p.sub(&yn).unwrap().frobenius_norm() <= 1e-6 * yn.frobenius_norm());
        }
    }

    #[test]
    fn full_ranks_reproduce_ridge() {
        let (x, y, _) = problem(4, 10, 4, &[3, 2], &[2, 2, 2], 0.3);
        let gamma = 0.25;
        let m = fit(&x, &y, gamma, &[4, 3, 2]);
        assert!(m.warnings().is_empty());
        let rls = rls_fit(&x, &y.unfold0().into_owned(), gamma).unwrap().coef;
        let w = DenseTensor::from_unfold0(&rls, &[4, 3, 2]).unwrap();
        assert!(m.regression_tensor().max_abs_diff(&w).unwrap() < 1e-8);
    }

    #[test]
    fn predictions_have_low_rank_and_agree_with_tensor() {
        let (x, y, _) = problem(5, 30, 6, &[5, 4, 5], &[3, 3, 3, 3], 0.1);
        let m = fit(&x, &y, 1e-2, &[3, 2, 3, 2]);
        let w = m.regression_tensor();
        assert!(multilinear_rank(&w, DEFAULT_RANK_TOL).unwrap().iter().zip([3, 2, 3, 2]).all(|(a, b)| *a <= b));
        let mut rng = Rng::new(9);
        for _ in 0..5 {
            let v: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
            let p = m.predict(&v).unwrap();
            let direct = w.mode_vector_product(&v, 0).unwrap();
            assert!(p.max_abs_diff(&direct).unwrap() <= 1e-10 * direct.frobenius_norm().max(1.0));
            let r = multilinear_rank(&p, DEFAULT_RANK_TOL).unwrap();
            assert!(r.iter().zip([2, 3, 2]).all(|(a, b)| *a <= b), "{r:?}");
        }
    }

    #[test]
    fn orthogonal_basis_change_leaves_tensor_unchanged() {
        let (x, y, _) = problem(6, 20, 4, &[4, 4], &[2, 3, 2], 0.05);
        let m = fit(&x, &y, 1e-3, &[2, 3, 2]);
        let mut rng = Rng::new(2);
        let (core, mut fs) = m.factors().clone().into_parts();
        let q = linalg::orthonormalize(&rng.normal_matrix(3, 3));
        fs[1] = &fs[1] * &q;
        let core = core.mode_product(&q.transpose(), 1).unwrap();
        let rotated = TuckerFactors::new(core, fs).unwrap();
        assert!(rotated.reconstruct().max_abs_diff(&m.regression_tensor()).unwrap() < 1e-10);
    }

    #[test]
    fn within_p_plus_one_of_reduced_rank_ridge() {
        let (x, y, _) = problem(7, 25, 5, &[6], &[3, 3], 0.2);
        let gamma = 0.1;
        let yf = y.unfold0().into_owned();
        for r in 1..=4 {
            let m = fit(&x, &y, gamma, &[r, 6]);
            let lrr = super::super::lrr_fit(&x, &yf, r, gamma).unwrap().coef;
            let w_lrr = DenseTensor::from_unfold0(&lrr, &[5, 6]).unwrap();
            let l_holrr = ridge_objective(&m.regression_tensor(), &x, &y, gamma).unwrap();
            let l_lrr = ridge_objective(&w_lrr, &x, &y, gamma).unwrap();
            assert!(l_holrr <= 2.0 * l_lrr, "rank {r}: {l_holrr} > 2·{l_lrr}");
        }
    }

    #[test]
    fn clamps_ranks_with_warnings() {
        let (x, y, _) = problem(8, 3, 5, &[2, 3], &[2, 2, 2], 0.1);
        let m = fit(&x, &y, 0.1, &[5, 4, 3]);
        assert_eq!(m.ranks(), vec![3, 2, 3]);
        assert_eq!(
            m.warnings(),
            &[
                Warning::RankClamped { mode: 0, requested: 5, used: 3 },
                Warning::RankClamped { mode: 1, requested: 4, used: 2 },
            ]
        );
    }

    #[test]
    fn rank_deficient_inputs_fall_back() {
        let mut rng = Rng::new(10);
        let b = rng.normal_matrix(10, 2);
        let x = Matrix::from_fn(10, 3, |i, j| if j < 2 { b[(i, j)] } else { b[(i, 0)] - b[(i, 1)] });
        let y = DenseTensor::from_unfold0(&rng.normal_matrix(10, 6), &[10, 2, 3]).unwrap();
        let m = fit(&x, &y, 0.0, &[3, 2, 3]);
        assert!(m.warnings().iter().any(|w| matches!(w, Warning::PinvFallback { .. })));
        assert!(m.regression_tensor().data().iter().all(|v| v.is_finite()));
        // Any least-squares solution attains the same fit as the minimum-norm one.
        let oracle = linalg::pinv(&x, 1e-12).unwrap() * y.unfold0();
        let w = DenseTensor::from_unfold0(&oracle, &[3, 2, 3]).unwrap();
        let fitted = m.predict_batch(&x).unwrap();
        assert!(fitted.max_abs_diff(&w.mode_product(&x, 0).unwrap()).unwrap() < 1e-8);
    }

    #[test]
    fn rejects_bad_arguments() {
        let (x, y, _) = problem(11, 6, 3, &[2], &[1, 1], 0.0);
        assert!(RegressionProblem::new(x.clone(), y.clone(), -1.0, vec![1, 1]).is_err());
        assert!(RegressionProblem::new(x.clone(), y.clone(), 0.1, vec![1]).is_err());
        assert!(RegressionProblem::new(x.clone(), y.clone(), 0.1, vec![0, 1]).is_err());
        assert!(RegressionProblem::new(x.rows(0, 5).into_owned(), y.clone(), 0.1, vec![1, 1]).is_err());
        let m = fit(&x, &y, 0.1, &[1, 1]);
        assert!(m.predict(&[1.0, 2.0]).is_err());
        assert!(m.predict_batch(&Matrix::zeros(2, 4)).is_err());
    }
}
