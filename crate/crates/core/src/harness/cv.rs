use serde::{Deserialize, Serialize};

use crate::datagen::{Rng, Stream};
use crate::error::{Error, Result};
use crate::regress::{gram, krls_fit, rls_fit, HolrrSolver, KernelHolrrSolver, KlrrPath, LrrPath};
use crate::tensor::{DenseTensor, Matrix};

use super::method::{check_ranks, stack_rows, Estimator, Hyper, MethodSpec};
use super::rmse;

/// Hyperparameter grid and fold layout for cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gammas: Vec<f64>,
    /// Rank candidates in the method's format (see [`Hyper`]); ignored for
    /// ridge regression.
    pub ranks: Vec<Vec<usize>>,
    pub folds: usize,
    pub seed: u64,
}

/// `n` values `10^lo, …, 10^hi`, evenly spaced in the exponent.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..n)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// Validation indices of each fold: a seeded permutation of `0..n` dealt
/// round-robin, each fold sorted.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::arg(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::arg(format!("{n} samples cannot fill {folds} folds")));
    }
    let perm = Rng::stream(seed, Stream::Split).permutation(n);
    let mut out = vec![Vec::new(); folds];
    for (pos, &i) in perm.iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub gamma: f64,
    pub ranks: Vec<usize>,
    /// Mean validation RMSE; infinite when a fit failed numerically.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: Hyper,
    pub score: f64,
    pub table: Vec<CvEntry>,
}

/// K-fold grid search. The selected point minimizes mean validation RMSE;
/// ties go to the smallest `γ`, then the lexicographically smallest ranks.
pub fn grid_search_cv(method: &MethodSpec, x: &Matrix, y: &DenseTensor, grid: &GridSpec) -> Result<CvResult> {
    check_xy(x, y)?;
    let folds = fold_assignment(x.nrows(), grid.folds, grid.seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = folds
        .iter()
        .map(|val| {
            let mut is_val = vec![false; x.nrows()];
            for &i in val {
                is_val[i] = true;
            }
            ((0..x.nrows()).filter(|&i| !is_val[i]).collect(), val.clone())
        })
        .collect();
    search(method, x, y, &splits, &grid.gammas, &grid.ranks)
}

/// Selection on a fixed validation set, with the same tie-breaking as
/// [`grid_search_cv`].
pub fn holdout_search(
    method: &MethodSpec,
    train: (&Matrix, &DenseTensor),
    val: (&Matrix, &DenseTensor),
    gammas: &[f64],
    ranks: &[Vec<usize>],
) -> Result<CvResult> {
    check_xy(train.0, train.1)?;
    check_xy(val.0, val.1)?;
    let n = train.0.nrows();
    let m = val.0.nrows();
    let x = stack_matrices(train.0, val.0)?;
    let y = DenseTensor::stack(
        &(0..n)
            .map(|i| train.1.slice0(i))
            .chain((0..m).map(|i| val.1.slice0(i)))
            .collect::<Result<Vec<_>>>()?,
    )?;
    search(method, &x, &y, &[((0..n).collect(), (n..n + m).collect())], gammas, ranks)
}

fn check_xy(x: &Matrix, y: &DenseTensor) -> Result<()> {
    if y.order() < 2 || y.shape()[0] != x.nrows() || x.nrows() == 0 {
        return Err(Error::arg(format!(
            "outputs of shape {:?} do not match {} input rows",
            y.shape(),
            x.nrows()
        )));
    }
    Ok(())
}

fn stack_matrices(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::arg("training and validation inputs differ in dimension"));
    }
    Ok(Matrix::from_fn(a.nrows() + b.nrows(), a.ncols(), |i, j| {
        if i < a.nrows() {
            a[(i, j)]
        } else {
            b[(i - a.nrows(), j)]
        }
    }))
}

pub(crate) fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

fn select(m: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Numerical failures of one candidate disqualify it instead of aborting the
/// search.
fn score_or_inf(r: Result<f64>) -> Result<f64> {
    match r {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Ok(f64::INFINITY),
        Err(e) if e.is_numerical() => {
            log::debug!("candidate failed: {e}");
            Ok(f64::INFINITY)
        }
        Err(e) => Err(e),
    }
}

/// Lowest score; ties go to the smallest γ, then the lexicographically
/// smallest ranks.
fn pick_best(table: &[CvEntry]) -> &CvEntry {
    table
        .iter()
        .min_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then(a.gamma.total_cmp(&b.gamma))
                .then_with(|| a.ranks.cmp(&b.ranks))
        })
        .expect("non-empty grid")
}

fn search(
    method: &MethodSpec,
    x: &Matrix,
    y: &DenseTensor,
    splits: &[(Vec<usize>, Vec<usize>)],
    gammas: &[f64],
    ranks: &[Vec<usize>],
) -> Result<CvResult> {
    if gammas.is_empty() {
        return Err(Error::arg("γ grid is empty"));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
        return Err(Error::arg(format!("invalid γ {g} in grid")));
    }
    let cands: Vec<Vec<usize>> = if method.estimator == Estimator::Rls {
        vec![Vec::new()]
    } else {
        ranks.to_vec()
    };
    if cands.is_empty() {
        return Err(Error::arg(format!("rank grid for {method} is empty")));
    }
    for r in &cands {
        check_ranks(method, &Hyper { gamma: 0.0, ranks: r.clone() }, y.order() - 1)?;
    }
    let out_shape = y.shape()[1..].to_vec();
    let k_all = match method.kernel {
        Some(k) => Some(gram(x, &k)?),
        None => None,
    };

    let mut scores = vec![vec![0.0; cands.len()]; gammas.len()];
    for (tr, va) in splits {
        let x_tr = select_rows(x, tr);
        let y_tr = y.select0(tr)?;
        let x_va = select_rows(x, va);
        let y_va = y.select0(va)?;
        let y0_tr = y_tr.unfold0().into_owned();
        let grams = k_all.as_ref().map(|k| (select(k, tr, tr), select(k, va, tr)));
        let eval = |pred: Result<DenseTensor>| score_or_inf(pred.and_then(|p| rmse(&y_va, &p)));
        let add = |scores: &mut Vec<Vec<f64>>, g: usize, r: usize, s: f64| {
            scores[g][r] += s / splits.len() as f64;
        };
        match (method.estimator, &grams) {
            (Estimator::Rls, None) => {
                for (g, &gamma) in gammas.iter().enumerate() {
                    let s = eval(rls_fit(&x_tr, &y0_tr, gamma).and_then(|f| stack_rows(&(&x_va * f.coef), &out_shape)))?;
                    add(&mut scores, g, 0, s);
                }
            }
            (Estimator::Rls, Some((k_tr, k_va))) => {
                for (g, &gamma) in gammas.iter().enumerate() {
                    let s = eval(krls_fit(k_tr, &y0_tr, gamma).and_then(|f| stack_rows(&(k_va * f.coef), &out_shape)))?;
                    add(&mut scores, g, 0, s);
                }
            }
            (Estimator::Lrr, None) => {
                for (g, &gamma) in gammas.iter().enumerate() {
                    match LrrPath::new(&x_tr, &y0_tr, gamma) {
                        Ok(path) => {
                            for (r, c) in cands.iter().enumerate() {
                                let s = eval(path.coef(c[0]).and_then(|f| stack_rows(&(&x_va * f.coef), &out_shape)))?;
                                add(&mut scores, g, r, s);
                            }
                        }
                        Err(e) => {
                            let s = score_or_inf(Err(e))?;
                            (0..cands.len()).for_each(|r| add(&mut scores, g, r, s));
                        }
                    }
                }
            }
            (Estimator::Lrr, Some((k_tr, k_va))) => {
                for (g, &gamma) in gammas.iter().enumerate() {
                    match KlrrPath::new(k_tr, &y0_tr, gamma) {
                        Ok(path) => {
                            for (r, c) in cands.iter().enumerate() {
                                let s = eval(path.coef(c[0]).and_then(|f| stack_rows(&(k_va * f.coef), &out_shape)))?;
                                add(&mut scores, g, r, s);
                            }
                        }
                        Err(e) => {
                            let s = score_or_inf(Err(e))?;
                            (0..cands.len()).for_each(|r| add(&mut scores, g, r, s));
                        }
                    }
                }
            }
            (Estimator::Holrr, None) => {
                let solver = HolrrSolver::new(&x_tr, &y_tr)?;
                for (g, &gamma) in gammas.iter().enumerate() {
                    for (r, c) in cands.iter().enumerate() {
                        let s = eval(solver.fit(gamma, c).and_then(|m| m.predict_batch(&x_va)))?;
                        add(&mut scores, g, r, s);
                    }
                }
            }
            (Estimator::Holrr, Some((k_tr, k_va))) => {
                let solver = KernelHolrrSolver::with_gram(method.kernel.unwrap(), &x_tr, &y_tr, k_tr.clone())?;
                for (g, &gamma) in gammas.iter().enumerate() {
                    for (r, c) in cands.iter().enumerate() {
                        let s = eval(solver.fit(gamma, c).and_then(|m| m.coeff().mode_product(k_va, 0)))?;
                        add(&mut scores, g, r, s);
                    }
                }
            }
        }
    }

    let mut table = Vec::with_capacity(gammas.len() * cands.len());
    for (g, &gamma) in gammas.iter().enumerate() {
        for (r, c) in cands.iter().enumerate() {
            table.push(CvEntry { gamma, ranks: c.clone(), score: scores[g][r] });
        }
    }
    let best = pick_best(&table);
    Ok(CvResult {
        best: Hyper { gamma: best.gamma, ranks: best.ranks.clone() },
        score: best.score,
        table,
    })
}
