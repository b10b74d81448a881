use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::regress::{
    gram, klrr_fit, krls_fit, lrr_fit, rls_fit, HolrrModel, HolrrSolver, KernelHolrrModel, KernelHolrrSolver,
    KernelSpec,
};
use crate::tensor::{DenseTensor, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Rls,
    Lrr,
    Holrr,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Rls => "rls",
            Estimator::Lrr => "lrr",
            Estimator::Holrr => "holrr",
        }
    }
}

/// An estimator, optionally kernelized. Written `rls`, `lrr`, `holrr`, or
/// with a kernel as in `holrr@rbf:1.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MethodSpec {
    pub estimator: Estimator,
    pub kernel: Option<KernelSpec>,
}

impl MethodSpec {
    pub fn new(estimator: Estimator, kernel: Option<KernelSpec>) -> Self {
        Self { estimator, kernel }
    }

    /// Text of the kernel part, empty for primal methods.
    pub fn kernel_label(&self) -> String {
        self.kernel.map(|k| k.to_string()).unwrap_or_default()
    }

    /// Number of rank entries a hyperparameter point needs for outputs of the
    /// given order (outputs only, i.e. excluding the sample mode).
    pub fn rank_len(&self, output_order: usize) -> usize {
        match self.estimator {
            Estimator::Rls => 0,
            Estimator::Lrr => 1,
            Estimator::Holrr => output_order + 1,
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.estimator.name())?;
        if let Some(k) = self.kernel {
            write!(f, "@{k}")?;
        }
        Ok(())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, kernel) = match s.split_once('@') {
            Some((n, k)) => (n, Some(k.parse::<KernelSpec>()?)),
            None => (s, None),
        };
        let estimator = match name.trim().to_ascii_lowercase().as_str() {
            "rls" => Estimator::Rls,
            "lrr" => Estimator::Lrr,
            "holrr" => Estimator::Holrr,
            other => {
                return Err(Error::arg(format!(
                    "unknown method {other:?} (expected rls, lrr or holrr, optionally @kernel)"
                )))
            }
        };
        Ok(Self { estimator, kernel })
    }
}

impl TryFrom<String> for MethodSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodSpec> for String {
    fn from(m: MethodSpec) -> String {
        m.to_string()
    }
}

/// One hyperparameter point. `ranks` is empty for ridge regression, holds
/// the single matrix rank for LRR and the full tuple `(R_0, …, R_p)` for
/// HOLRR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub gamma: f64,
    pub ranks: Vec<usize>,
}

/// A fitted model of any method, able to predict stacked outputs.
#[derive(Debug, Clone)]
pub enum Fitted {
    Linear { coef: Matrix, out_shape: Vec<usize>, warnings: Vec<Warning> },
    Dual { coef: Matrix, train: Matrix, kernel: KernelSpec, out_shape: Vec<usize>, warnings: Vec<Warning> },
    Holrr(HolrrModel),
    KernelHolrr(KernelHolrrModel),
}

impl Fitted {
    pub fn predict(&self, x: &Matrix) -> Result<DenseTensor> {
        match self {
            Fitted::Linear { coef, out_shape, .. } => {
                if x.ncols() != coef.nrows() {
                    return Err(Error::ShapeMismatch {
                        expected: vec![x.nrows(), coef.nrows()],
                        found: vec![x.nrows(), x.ncols()],
                    });
                }
                stack_rows(&(x * coef), out_shape)
            }
            Fitted::Dual { coef, train, kernel, out_shape, .. } => {
                stack_rows(&(kernel.cross_gram(x, train)? * coef), out_shape)
            }
            Fitted::Holrr(m) => m.predict_batch(x),
            Fitted::KernelHolrr(m) => m.predict_batch(x),
        }
    }

    pub fn warnings(&self) -> &[Warning] {
        match self {
            Fitted::Linear { warnings, .. } | Fitted::Dual { warnings, .. } => warnings,
            Fitted::Holrr(m) => m.warnings(),
            Fitted::KernelHolrr(m) => m.warnings(),
        }
    }
}

pub(crate) fn stack_rows(rows: &Matrix, out_shape: &[usize]) -> Result<DenseTensor> {
    let mut shape = vec![rows.nrows()];
    shape.extend_from_slice(out_shape);
    DenseTensor::from_unfold0(rows, &shape)
}

pub(crate) fn check_ranks(method: &MethodSpec, hyper: &Hyper, output_order: usize) -> Result<()> {
    let need = method.rank_len(output_order);
    if hyper.ranks.len() != need {
        return Err(Error::arg(format!(
            "{method} needs {need} rank value(s), got {:?}",
            hyper.ranks
        )));
    }
    Ok(())
}

/// Fits `method` on `(x, y)` at one hyperparameter point.
pub fn fit_method(method: &MethodSpec, x: &Matrix, y: &DenseTensor, hyper: &Hyper) -> Result<Fitted> {
    if y.order() < 2 || y.shape()[0] != x.nrows() {
        return Err(Error::arg(format!(
            "outputs of shape {:?} do not match {} input rows",
            y.shape(),
            x.nrows()
        )));
    }
    check_ranks(method, hyper, y.order() - 1)?;
    let out_shape = y.shape()[1..].to_vec();
    let y0 = y.unfold0().into_owned();
    let gamma = hyper.gamma;
    Ok(match (method.estimator, method.kernel) {
        (Estimator::Rls, None) => {
            let f = rls_fit(x, &y0, gamma)?;
            Fitted::Linear { coef: f.coef, out_shape, warnings: f.warnings }
        }
        (Estimator::Lrr, None) => {
            let f = lrr_fit(x, &y0, hyper.ranks[0], gamma)?;
            Fitted::Linear { coef: f.coef, out_shape, warnings: f.warnings }
        }
        (Estimator::Holrr, None) => Fitted::Holrr(HolrrSolver::new(x, y)?.fit(gamma, &hyper.ranks)?),
        (Estimator::Rls, Some(k)) => {
            let f = krls_fit(&gram(x, &k)?, &y0, gamma)?;
            Fitted::Dual { coef: f.coef, train: x.clone(), kernel: k, out_shape, warnings: f.warnings }
        }
        (Estimator::Lrr, Some(k)) => {
            let f = klrr_fit(&gram(x, &k)?, &y0, hyper.ranks[0], gamma)?;
            Fitted::Dual { coef: f.coef, train: x.clone(), kernel: k, out_shape, warnings: f.warnings }
        }
        (Estimator::Holrr, Some(k)) => Fitted::KernelHolrr(KernelHolrrSolver::new(k, x, y)?.fit(gamma, &hyper.ranks)?),
    })
}
