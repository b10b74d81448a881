use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{DenseTensor, Matrix, TuckerFactors};

use super::rng::{Rng, Stream};

/// Parameters of a synthetic regression problem `Y = W ×̄_0 φ(x) + E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Dimension of the covariate `x` fed to the estimators.
    pub input_dim: usize,
    pub output_shape: Vec<usize>,
    /// Multilinear rank of the generating `W`, input mode first.
    pub ranks: Vec<usize>,
    /// Standard deviation of each noise entry.
    pub noise_std: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// `d_0 = 10`, outputs `10 × 10 × 10`, ranks `(6, 4, 4, 8)`, noise 0.1.
    pub fn standard_linear(n_train: usize, seed: u64) -> Self {
        Self {
            input_dim: 10,
            output_shape: vec![10, 10, 10],
            ranks: vec![6, 4, 4, 8],
            noise_std: 0.1,
            n_train,
            n_test: 100,
            seed,
        }
    }

    /// `x ∈ R^5`, `W` of shape `25 × 10 × 10 × 10` acting on `x ⊗ x`, ranks
    /// `(5, 6, 4, 2)`, noise 0.1.
    pub fn standard_nonlinear(n_train: usize, seed: u64) -> Self {
        Self {
            input_dim: 5,
            output_shape: vec![10, 10, 10],
            ranks: vec![5, 6, 4, 2],
            noise_std: 0.1,
            n_train,
            n_test: 100,
            seed,
        }
    }

    fn check(&self, w_input_dim: usize) -> Result<Vec<usize>> {
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::arg(format!("noise std must be ≥ 0, got {}", self.noise_std)));
        }
        if self.input_dim == 0 || self.output_shape.is_empty() {
            return Err(Error::arg("need a positive input dimension and at least one output mode"));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::arg("training and test sets must be non-empty"));
        }
        let mut dims = vec![w_input_dim];
        dims.extend_from_slice(&self.output_shape);
        if self.ranks.len() != dims.len() {
            return Err(Error::arg(format!(
                "{} ranks given for a tensor of order {}",
                self.ranks.len(),
                dims.len()
            )));
        }
        Ok(dims)
    }
}

/// Training and test samples plus the generating regression tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub x_train: Matrix,
    pub y_train: DenseTensor,
    pub x_test: Matrix,
    pub y_test: DenseTensor,
    pub w_true: DenseTensor,
}

/// Standard-normal core transformed by orthonormalized standard-normal
/// factors.
pub fn random_tucker(dims: &[usize], ranks: &[usize], rng: &mut Rng) -> Result<TuckerFactors> {
    if dims.len() != ranks.len() || dims.is_empty() {
        return Err(Error::arg(format!("dims {dims:?} and ranks {ranks:?} differ in length")));
    }
    for (i, (&d, &r)) in dims.iter().zip(ranks).enumerate() {
        if r == 0 || r > d {
            return Err(Error::arg(format!("rank {r} of mode {i} must lie in 1..={d}")));
        }
    }
    let core = DenseTensor::from_fn(ranks, |_| rng.normal())?;
    let factors = dims
        .iter()
        .zip(ranks)
        .map(|(&d, &r)| linalg::orthonormalize(&rng.normal_matrix(d, r)))
        .collect();
    TuckerFactors::new(core, factors)
}

/// A random tensor of shape `dims` and multilinear rank `ranks` (almost
/// surely, when each `R_i ≤ ∏_{j≠i} R_j`).
pub fn random_lowrank_tensor(dims: &[usize], ranks: &[usize], seed: u64) -> Result<DenseTensor> {
    Ok(random_tucker(dims, ranks, &mut Rng::stream(seed, Stream::Tensor))?.reconstruct())
}

/// Row `n` is `x_n ⊗ x_n`, entry `i·d + j` holding `x_i x_j`.
pub fn kron_square(x: &Matrix) -> Matrix {
    let d = x.ncols();
    Matrix::from_fn(x.nrows(), d * d, |n, k| x[(n, k / d)] * x[(n, k % d)])
}

fn noisy(w: &DenseTensor, feats: &Matrix, std: f64, rng: &mut Rng) -> Result<DenseTensor> {
    let mut y = w.mode_product(feats, 0)?;
    if std > 0.0 {
        for v in y.data_mut() {
            *v += std * rng.normal();
        }
    }
    Ok(y)
}

fn generate(spec: &SynthSpec, w_input_dim: usize, features: impl Fn(&Matrix) -> Matrix) -> Result<SynthData> {
    let dims = spec.check(w_input_dim)?;
    let seed = spec.seed;
    let w_true = random_tucker(&dims, &spec.ranks, &mut Rng::stream(seed, Stream::Tensor))?.reconstruct();
    let x_train = Rng::stream(seed, Stream::Inputs).normal_matrix(spec.n_train, spec.input_dim);
    let x_test = Rng::stream(seed, Stream::TestInputs).normal_matrix(spec.n_test, spec.input_dim);
    let y_train = noisy(&w_true, &features(&x_train), spec.noise_std, &mut Rng::stream(seed, Stream::Noise))?;
    let y_test = noisy(&w_true, &features(&x_test), spec.noise_std, &mut Rng::stream(seed, Stream::TestNoise))?;
    Ok(SynthData {
        x_train,
        y_train,
        x_test,
        y_test,
        w_true,
    })
}

/// `Y = W ×̄_0 x + E` with `x` and the entries of `W`'s Tucker parts standard
/// normal.
pub fn gen_linear_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    generate(spec, spec.input_dim, |x| x.clone())
}

/// `Y = W ×̄_0 (x ⊗ x) + E`; `W` has input dimension `d_0²` while the
/// returned covariates are the plain `x`.
pub fn gen_nonlinear_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    generate(spec, spec.input_dim * spec.input_dim, kron_square)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{multilinear_rank, DEFAULT_RANK_TOL};

    #[test]
    fn lowrank_tensor_has_requested_rank() {
        let t = random_lowrank_tensor(&[10, 10, 10, 10], &[6, 4, 4, 8], 3).unwrap();
        assert_eq!(multilinear_rank(&t, DEFAULT_RANK_TOL).unwrap(), vec![6, 4, 4, 8]);
        let t1 = random_lowrank_tensor(&[3, 4, 2], &[1, 1, 1], 3).unwrap();
        assert_eq!(multilinear_rank(&t1, DEFAULT_RANK_TOL).unwrap(), vec![1, 1, 1]);
        assert_eq!(random_lowrank_tensor(&[3, 4, 2], &[2, 2, 2], 9).unwrap(), random_lowrank_tensor(&[3, 4, 2], &[2, 2, 2], 9).unwrap());
        assert!(random_lowrank_tensor(&[3, 4], &[4, 1], 0).is_err());
    }

    #[test]
    fn noiseless_linear_data_is_exact() {
        let mut spec = SynthSpec::standard_linear(20, 1);
        spec.noise_std = 0.0;
        let d = gen_linear_synthetic(&spec).unwrap();
        assert_eq!(d.y_train.shape(), &[20, 10, 10, 10]);
        assert_eq!(d.x_test.shape(), (100, 10));
        assert_eq!(d.y_train, d.w_true.mode_product(&d.x_train, 0).unwrap());
    }

    #[test]
    fn noise_has_requested_std() {
        let spec = SynthSpec {
            input_dim: 2,
            output_shape: vec![5],
            ranks: vec![1, 1],
            noise_std: 0.1,
            n_train: 10_000,
            n_test: 1,
            seed: 4,
        };
        let d = gen_linear_synthetic(&spec).unwrap();
        let e = d.y_train.sub(&d.w_true.mode_product(&d.x_train, 0).unwrap()).unwrap();
        let std = e.frobenius_norm() / (e.len() as f64).sqrt();
        assert!((std - 0.1).abs() < 0.005, "{std}");
    }

    #[test]
    fn nonlinear_uses_kronecker_square() {
        let mut spec = SynthSpec::standard_nonlinear(6, 2);
        spec.noise_std = 0.0;
        let d = gen_nonlinear_synthetic(&spec).unwrap();
        assert_eq!(d.w_true.shape(), &[25, 10, 10, 10]);
        assert_eq!(d.x_train.ncols(), 5);
        assert_eq!(multilinear_rank(&d.w_true, DEFAULT_RANK_TOL).unwrap(), vec![5, 6, 4, 2]);
        let e1 = Matrix::from_row_slice(1, 5, &[1., 0., 0., 0., 0.]);
        let f = kron_square(&e1);
        assert_eq!(f[(0, 0)], 1.0);
        assert_eq!(f.sum(), 1.0);
        let expect = d.w_true.mode_product(&kron_square(&d.x_train), 0).unwrap();
        assert_eq!(d.y_train, expect);
    }

    #[test]
    fn same_seed_same_data() {
        let a = gen_linear_synthetic(&SynthSpec::standard_linear(10, 77)).unwrap();
        let b = gen_linear_synthetic(&SynthSpec::standard_linear(10, 77)).unwrap();
        assert_eq!(a, b);
        let c = gen_linear_synthetic(&SynthSpec::standard_linear(10, 78)).unwrap();
        assert_ne!(a.y_train, c.y_train);
    }
}
