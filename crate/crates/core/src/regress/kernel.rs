use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Positive-definite kernels on `R^{d_0}`.
///
/// Text form: `linear`, `rbf:<σ>` or `poly:<degree>,<offset>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `xᵀy`
    Linear,
    /// `exp(−‖x − y‖² / 2σ²)`
    Rbf { sigma: f64 },
    /// `(xᵀy + c)^degree`
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            KernelSpec::Rbf { sigma } => Err(Error::arg(format!("rbf bandwidth must be positive, got {sigma}"))),
            KernelSpec::Polynomial { degree, offset } => {
                if degree == 0 {
                    Err(Error::arg("polynomial degree must be at least 1"))
                } else if !(offset >= 0.0) || !offset.is_finite() {
                    Err(Error::arg(format!("polynomial offset must be ≥ 0, got {offset}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match *self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Rbf { sigma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Polynomial { degree, offset } => (dot(a, b) + offset).powi(degree as i32),
        }
    }

    /// `K[i, j] = k(a_i, b_j)` over the rows of `a` and `b`.
    pub fn cross_gram(&self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        self.validate()?;
        if a.ncols() != b.ncols() {
            return Err(Error::ShapeMismatch {
                expected: vec![b.nrows(), b.ncols()],
                found: vec![a.nrows(), a.ncols()],
            });
        }
        if let KernelSpec::Linear = self {
            return Ok(a * b.transpose());
        }
        let ar = rows(a);
        let br = rows(b);
        Ok(Matrix::from_fn(a.nrows(), b.nrows(), |i, j| self.eval(&ar[i], &br[j])))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Gram matrix of the rows of `x`; exactly symmetric.
pub fn gram(x: &Matrix, k: &KernelSpec) -> Result<Matrix> {
    let mut g = k.cross_gram(x, x)?;
    let n = g.nrows();
    for j in 0..n {
        for i in j + 1..n {
            g[(j, i)] = g[(i, j)];
        }
    }
    Ok(g)
}

/// `(k_x)_n = k(x_n, x)` over the rows `x_n` of `train`.
pub fn kernel_vec(k: &KernelSpec, train: &Matrix, x: &[f64]) -> Result<DVector<f64>> {
    k.validate()?;
    if x.len() != train.ncols() {
        return Err(Error::ShapeMismatch {
            expected: vec![train.ncols()],
            found: vec![x.len()],
        });
    }
    Ok(DVector::from_iterator(
        train.nrows(),
        train.row_iter().map(|r| k.eval(&r.iter().copied().collect::<Vec<_>>(), x)),
    ))
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Rbf { sigma } => write!(f, "rbf:{sigma}"),
            KernelSpec::Polynomial { degree, offset } => write!(f, "poly:{degree},{offset}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::arg(format!("kernel {s:?}: {why} (expected linear, rbf:σ or poly:d,c)"));
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (s.trim(), None),
        };
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
        let spec = match (name.to_ascii_lowercase().as_str(), params) {
            ("linear", None) => KernelSpec::Linear,
            ("rbf", Some(p)) => KernelSpec::Rbf { sigma: num(p)? },
            ("poly" | "polynomial", Some(p)) => {
                let (d, c) = p.split_once(',').unwrap_or((p, "0"));
                let degree = d.trim().parse::<u32>().map_err(|e| bad(&e.to_string()))?;
                KernelSpec::Polynomial { degree, offset: num(c)? }
            }
            _ => return Err(bad("unrecognized form")),
        };
        spec.validate().map_err(|e| bad(&e.to_string()))?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Rng;
    use crate::linalg;

    #[test]
    fn examples() {
        let i3 = Matrix::identity(3, 3);
        assert_eq!(gram(&i3, &KernelSpec::Linear).unwrap(), i3);
        let mut rng = Rng::new(1);
        let x = rng.normal_matrix(6, 3);
        let k = gram(&x, &KernelSpec::Rbf { sigma: 0.7 }).unwrap();
        assert!((0..6).all(|i| k[(i, i)] == 1.0));
        let p = KernelSpec::Polynomial { degree: 2, offset: 0.0 };
        assert_eq!(p.eval(&[1.0, 1.0], &[2.0, 0.0]), 4.0);
    }

    #[test]
    fn linear_gram_is_xxt() {
        let mut rng = Rng::new(2);
        let x = rng.normal_matrix(7, 4);
        let k = gram(&x, &KernelSpec::Linear).unwrap();
        assert!((k.clone() - &x * x.transpose()).amax() < 1e-13);
        assert_eq!(k, k.transpose());
    }

    #[test]
    fn grams_are_symmetric_psd() {
        let mut rng = Rng::new(3);
        let x = rng.normal_matrix(12, 3);
        for spec in [
            KernelSpec::Linear,
            KernelSpec::Rbf { sigma: 1.3 },
            KernelSpec::Polynomial { degree: 3, offset: 1.0 },
        ] {
            let k = gram(&x, &spec).unwrap();
            assert_eq!(k, k.transpose());
            let e = linalg::sym_eig(&k).unwrap();
            assert!(e.values.min() >= -1e-8 * e.values.max().max(1.0), "{spec}");
        }
    }

    #[test]
    fn kernel_vec_matches_gram_rows() {
        let mut rng = Rng::new(4);
        let x = rng.normal_matrix(5, 2);
        let spec = KernelSpec::Rbf { sigma: 0.5 };
        let k = gram(&x, &spec).unwrap();
        let row: Vec<f64> = x.row(3).iter().copied().collect();
        let v = kernel_vec(&spec, &x, &row).unwrap();
        assert!((v - k.column(3)).amax() < 1e-15);
        assert!(kernel_vec(&spec, &x, &[1.0]).is_err());
    }

    #[test]
    fn text_form_round_trips() {
        for s in ["linear", "rbf:1.5", "poly:2,1", "poly:3,0.25"] {
            let k: KernelSpec = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert_eq!("poly:2".parse::<KernelSpec>().unwrap(), KernelSpec::Polynomial { degree: 2, offset: 0.0 });
        for bad in ["rbf", "rbf:0", "rbf:-1", "poly:0,1", "poly:2,-1", "cubic", "linear:1"] {
            assert!(bad.parse::<KernelSpec>().is_err(), "{bad}");
        }
        let json = serde_json::to_string(&KernelSpec::Rbf { sigma: 0.1 }).unwrap();
        assert_eq!(json, r#"{"type":"rbf","sigma":0.1}"#);
        assert_eq!(serde_json::from_str::<KernelSpec>(&json).unwrap(), KernelSpec::Rbf { sigma: 0.1 });
    }
}
