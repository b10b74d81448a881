//! Dense solvers used by the estimators.
//!
//! The symmetric eigendecomposition is delegated to `faer` (tridiagonal
//! reduction plus divide-and-conquer), built without thread parallelism so the
//! results are bit-reproducible. Everything returned from here follows one sign
//! convention: each eigen/singular vector is flipped so that its
//! largest-magnitude entry is positive, the first such entry winning ties.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Eigenpairs sorted by decreasing eigenvalue; column `j` of `vectors` goes
/// with `values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigResult {
    pub values: DVector<f64>,
    pub vectors: Matrix,
    /// Set when fewer pairs than requested were returned.
    pub clamped: bool,
}

impl SymEigResult {
    /// The leading `r` pairs.
    pub fn truncate(&self, r: usize) -> SymEigResult {
        let r = r.min(self.values.len());
        SymEigResult {
            values: self.values.rows(0, r).into_owned(),
            vectors: self.vectors.columns(0, r).into_owned(),
            clamped: self.clamped,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_square(a: &Matrix, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() || a.is_empty() {
        return Err(Error::arg(format!(
            "{what} must be a non-empty square matrix, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

/// Flips columns so the largest-magnitude entry of each is positive.
pub fn fix_signs(v: &mut Matrix) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// `(A + Aᵀ) / 2`
pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Lower Cholesky factor of a symmetric matrix, reading only its lower
/// triangle. A pivot at or below `n · 1e-13 · max|a_ii|` is treated as a
/// failure, so numerically singular normal matrices are reported rather than
/// factored into garbage.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = check_square(a, "Cholesky input")?;
    let max_diag = a.diagonal().iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let floor = n as f64 * 1e-13 * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `A X = B` for symmetric positive-definite `A` by Cholesky.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = check_square(a, "SPD system matrix")?;
    if b.nrows() != n {
        return Err(Error::arg(format!(
            "right-hand side has {} rows, system has {n}",
            b.nrows()
        )));
    }
    let l = cholesky(a)?;
    let y = l
        .solve_lower_triangular(b)
        .ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
    l.tr_solve_lower_triangular(&y)
        .ok_or(Error::NotPositiveDefinite { pivot: 0 })
}

/// Full eigendecomposition of a symmetric matrix (lower triangle is read).
pub fn sym_eig(s: &Matrix) -> Result<SymEigResult> {
    let n = check_square(s, "symmetric eigenproblem input")?;
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::arg("symmetric eigenproblem input has non-finite entries"));
    }
    let f = faer::Mat::<f64>::from_fn(n, n, |i, j| if i >= j { s[(i, j)] } else { s[(j, i)] });
    let evd = f.selfadjoint_eigendecomposition(faer::Side::Lower);
    let vals = evd.s().column_vector();
    let u = evd.u();
    // faer returns ascending order.
    let values = DVector::from_fn(n, |k, _| vals.read(n - 1 - k));
    let mut vectors = Matrix::from_fn(n, n, |i, k| u.read(i, n - 1 - k));
    fix_signs(&mut vectors);
    Ok(SymEigResult {
        values,
        vectors,
        clamped: false,
    })
}

fn check_count(r: usize, n: usize) -> Result<(usize, bool)> {
    if r == 0 {
        return Err(Error::arg("eigenpair count must be at least 1"));
    }
    Ok((r.min(n), r > n))
}

/// The `r` largest eigenpairs of a symmetric matrix. `r > dim` is clamped and
/// flagged.
pub fn sym_eig_top(s: &Matrix, r: usize) -> Result<SymEigResult> {
    let (r, clamped) = check_count(r, s.nrows())?;
    let mut e = sym_eig(s)?.truncate(r);
    e.clamped = clamped;
    Ok(e)
}

/// The `r` largest eigenpairs of the pencil `S v = λ M v` with `S` symmetric
/// positive semi-definite and `M` symmetric positive definite.
///
/// Solved by whitening with `M = L Lᵀ`: the symmetric problem
/// `L⁻¹ S L⁻ᵀ y = λ y` is decomposed and `v = L⁻ᵀ y`, so the returned vectors
/// are `M`-orthonormal (`VᵀMV = I`), not orthonormal.
pub fn gen_sym_eig_top(s: &Matrix, m: &Matrix, r: usize) -> Result<SymEigResult> {
    let n = check_square(m, "pencil metric")?;
    if s.shape() != m.shape() {
        return Err(Error::arg("pencil matrices differ in shape"));
    }
    let (r, clamped) = check_count(r, n)?;
    let l = cholesky(m)?;
    let fail = Error::NotPositiveDefinite { pivot: 0 };
    let z = l.solve_lower_triangular(&symmetrize(s)).ok_or(fail)?;
    let c = l
        .solve_lower_triangular(&z.transpose())
        .ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
    let e = sym_eig(&symmetrize(&c))?.truncate(r);
    let mut vectors = l
        .tr_solve_lower_triangular(&e.vectors)
        .ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
    fix_signs(&mut vectors);
    Ok(SymEigResult {
        values: e.values,
        vectors,
        clamped,
    })
}

/// Pencil eigenvectors when `M` is only positive semi-definite: the problem is
/// restricted to the range of `M` (eigenvalues of `M` above `tol · λ_max`),
/// which makes the result the leading eigenvectors of `M⁺ S` for `S` supported
/// on that range. If `r` exceeds the rank of `M` the basis is completed with
/// null-space directions of `M`, carrying eigenvalue zero.
pub fn gen_sym_eig_top_semidefinite(s: &Matrix, m: &Matrix, r: usize, tol: f64) -> Result<SymEigResult> {
    let n = check_square(m, "pencil metric")?;
    let (r, clamped) = check_count(r, n)?;
    let me = sym_eig(m)?;
    let top = me.values[0].max(0.0);
    let rank = me.values.iter().take_while(|&&v| v > tol * top && v > 0.0).count();
    let mut values = DVector::zeros(r);
    let mut vectors = Matrix::zeros(n, r);
    let mut filled = 0;
    if rank > 0 {
        let q = me.vectors.columns(0, rank);
        let scale = DVector::from_fn(rank, |k, _| me.values[k].sqrt().recip());
        // B = Q_r Λ_r^{-1/2}
        let mut b = q.into_owned();
        for (k, mut col) in b.column_iter_mut().enumerate() {
            col *= scale[k];
        }
        let reduced = symmetrize(&(b.transpose() * s * &b));
        let e = sym_eig(&reduced)?.truncate(r.min(rank));
        let v = &b * &e.vectors;
        filled = e.len();
        values.rows_mut(0, filled).copy_from(&e.values);
        vectors.columns_mut(0, filled).copy_from(&v);
    }
    for k in filled..r {
        vectors.set_column(k, &me.vectors.column(rank + k - filled));
    }
    fix_signs(&mut vectors);
    Ok(SymEigResult {
        values,
        vectors,
        clamped,
    })
}

/// Singular values in decreasing order.
pub fn singular_values(a: &Matrix) -> DVector<f64> {
    if a.is_empty() {
        return DVector::zeros(0);
    }
    let mut sv: Vec<f64> = a.clone().singular_values().iter().cloned().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    DVector::from_vec(sv)
}

/// Singular values and a complete orthonormal basis of left singular vectors
/// (`m × m`), ordered by decreasing singular value. When `a` has fewer columns
/// than rows the basis is completed by padding with zero columns.
pub fn left_singular_vectors(a: &Matrix) -> (DVector<f64>, Matrix) {
    let m = a.nrows();
    let padded;
    let src = if a.ncols() < m {
        padded = a.clone().resize_horizontally(m, 0.0);
        &padded
    } else {
        a
    };
    let svd = src.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = DVector::from_fn(order.len(), |k, _| svd.singular_values[order[k]]);
    let mut vectors = Matrix::from_fn(m, order.len(), |i, k| u[(i, order[k])]);
    fix_signs(&mut vectors);
    (values, vectors)
}

/// Moore–Penrose pseudo-inverse; singular values at or below
/// `tol · σ_max` are treated as zero.
pub fn pinv(a: &Matrix, tol: f64) -> Result<Matrix> {
    if !(tol > 0.0) {
        return Err(Error::arg(format!("pinv tolerance must be positive, got {tol}")));
    }
    if a.is_empty() {
        return Ok(Matrix::zeros(a.ncols(), a.nrows()));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested Vᵀ");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = Matrix::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol * smax && s > 0.0 {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    Ok(out)
}

/// Orthonormal basis for the column span of `v` (thin QR, `R` with
/// nonnegative diagonal).
pub fn orthonormalize(v: &Matrix) -> Matrix {
    let k = v.ncols();
    let qr = v.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q.columns(0, k.min(q.ncols())).into_owned();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `max |UᵀU − I|`.
pub fn orthonormality_defect(u: &Matrix) -> f64 {
    let g = u.transpose() * u;
    (g - Matrix::identity(u.ncols(), u.ncols())).amax()
}
