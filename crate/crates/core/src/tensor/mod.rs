//! Dense tensors and the multilinear algebra built on them.
//!
//! Storage is column-major over the multi-index: the first index varies
//! fastest. With that layout the mode-0 unfolding is the raw buffer read as a
//! `d_0 × (d_1 ⋯ d_{p-1})` column-major matrix, and [`DenseTensor::vectorize`]
//! is a copy of the buffer.
//!
//! Unfoldings use the Kolda–Bader column order: in `T_(n)`, column
//! `j = Σ_{k≠n} i_k J_k` with `J_k = ∏_{m<k, m≠n} d_m`, so among the remaining
//! indices the one belonging to the smallest mode varies fastest. This is the
//! order for which
//!
//! ```text
//! (G ×_0 U_0 ⋯ ×_{p-1} U_{p-1})_(n) = U_n G_(n) (U_{p-1} ⊗ ⋯ ⊗ U_{n+1} ⊗ U_{n-1} ⊗ ⋯ ⊗ U_0)ᵀ
//! ```
//!
//! holds. Modes are numbered from zero throughout the crate.

mod io;
mod tucker;

use std::ops::Index;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};

use crate::error::{Error, Result};

pub use io::{
    encode_tensor, load_tensor, read_csv_matrix, read_dten, write_csv_matrix, write_dten, DTEN_MAGIC,
};
pub use tucker::{
    hosvd_truncated, multilinear_rank, tucker_reconstruct, TuckerFactors, DEFAULT_RANK_TOL,
};

pub type Matrix = DMatrix<f64>;

/// An order-`p` array of `f64` with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::arg("tensor order must be at least 1"));
    }
    if let Some(k) = shape.iter().position(|&d| d == 0) {
        return Err(Error::arg(format!("dimension {k} of shape {shape:?} is zero")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::arg(format!("shape {shape:?} overflows usize")))
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(Error::arg(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            advance(&mut idx, shape);
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Wraps a non-empty matrix as an order-2 tensor without changing element
    /// positions.
    pub fn from_matrix(m: &Matrix) -> Self {
        assert!(!m.is_empty(), "cannot wrap an empty matrix as a tensor");
        Self {
            shape: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    /// Reads a `rows × cols` matrix as a tensor of the given shape. The first
    /// mode of `shape` must equal `rows`; this is the inverse of the mode-0
    /// unfolding.
    pub fn from_unfold0(m: &Matrix, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if m.nrows() != shape[0] || m.len() != len {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                found: vec![m.nrows(), m.ncols()],
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: m.as_slice().to_vec(),
        })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, idx: &[usize]) -> Option<f64> {
        self.offset(idx).map(|o| self.data[o])
    }

    fn offset(&self, idx: &[usize]) -> Option<usize> {
        if idx.len() != self.shape.len() {
            return None;
        }
        let mut off = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.shape) {
            if i >= d {
                return None;
            }
            off += i * stride;
            stride *= d;
        }
        Some(off)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::arg(format!(
                "mode {mode} out of range for order-{} tensor",
                self.order()
            )));
        }
        Ok(())
    }

    /// `(∏_{k<n} d_k, d_n, ∏_{k>n} d_k)`
    fn split(&self, mode: usize) -> (usize, usize, usize) {
        let left = self.shape[..mode].iter().product();
        let right = self.shape[mode + 1..].iter().product();
        (left, self.shape[mode], right)
    }

    /// Number of columns of every unfolding other than along `mode`.
    fn rest(&self, mode: usize) -> usize {
        self.len() / self.shape[mode]
    }

    /// Zero-copy view of the mode-0 unfolding.
    pub fn unfold0(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.shape[0], self.rest(0))
    }

    /// The mode-`n` unfolding `T_(n)`, of shape `d_n × ∏_{k≠n} d_k`.
    pub fn matricize(&self, mode: usize) -> Result<Matrix> {
        self.check_mode(mode)?;
        let (left, dn, right) = self.split(mode);
        if left == 1 {
            return Ok(Matrix::from_column_slice(dn, right, &self.data));
        }
        let mut m = Matrix::zeros(dn, left * right);
        for r in 0..right {
            let slab = &self.data[r * left * dn..(r + 1) * left * dn];
            for i in 0..dn {
                let fiber = &slab[i * left..(i + 1) * left];
                for (l, &v) in fiber.iter().enumerate() {
                    m[(i, l + left * r)] = v;
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`matricize`](Self::matricize): folds a `d_n × rest` matrix
    /// back into a tensor of the given shape.
    pub fn from_matricization(m: &Matrix, mode: usize, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if mode >= shape.len() {
            return Err(Error::arg(format!(
                "mode {mode} out of range for shape {shape:?}"
            )));
        }
        if m.nrows() != shape[mode] || m.len() != len {
            return Err(Error::ShapeMismatch {
                expected: vec![shape[mode], len / shape[mode]],
                found: vec![m.nrows(), m.ncols()],
            });
        }
        let left: usize = shape[..mode].iter().product();
        let right: usize = shape[mode + 1..].iter().product();
        let dn = shape[mode];
        let mut data = vec![0.0; len];
        for r in 0..right {
            for i in 0..dn {
                for l in 0..left {
                    data[l + left * (i + dn * r)] = m[(i, l + left * r)];
                }
            }
        }
        Ok(Self::from_parts(shape.to_vec(), data))
    }

    /// `vec(T)`: the column-stacking of the mode-0 unfolding.
    pub fn vectorize(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data)
    }

    /// Mode-`n` product `T ×_n M` for `M` of shape `m × d_n`; defined by
    /// `(T ×_n M)_(n) = M T_(n)`.
    pub fn mode_product(&self, m: &Matrix, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let (left, dn, right) = self.split(mode);
        if m.ncols() != dn || m.nrows() == 0 {
            return Err(Error::arg(format!(
                "mode-{mode} product needs a matrix with {dn} columns, got {}×{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let rows = m.nrows();
        let mut out = vec![0.0; left * rows * right];
        if left == 1 {
            let t = DMatrixView::from_slice(&self.data, dn, right);
            let mut o = DMatrixViewMut::from_slice(&mut out, rows, right);
            o.gemm(1.0, m, &t, 0.0);
        } else {
            // Each slab along the trailing modes is a left × d_n matrix whose
            // rows are mode-n fibers; multiply it by Mᵀ.
            let mt = m.transpose();
            for r in 0..right {
                let t = DMatrixView::from_slice(&self.data[r * left * dn..(r + 1) * left * dn], left, dn);
                let mut o = DMatrixViewMut::from_slice(
                    &mut out[r * left * rows..(r + 1) * left * rows],
                    left,
                    rows,
                );
                o.gemm(1.0, &t, &mt, 0.0);
            }
        }
        let mut shape = self.shape.clone();
        shape[mode] = rows;
        Ok(Self::from_parts(shape, out))
    }

    /// Contraction `T ×̄_n v` with a vector, dropping mode `n`. Contracting an
    /// order-1 tensor yields a tensor of shape `[1]`.
    pub fn mode_vector_product(&self, v: &[f64], mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        if v.len() != self.shape[mode] {
            return Err(Error::arg(format!(
                "mode-{mode} contraction needs a vector of length {}, got {}",
                self.shape[mode],
                v.len()
            )));
        }
        let row = Matrix::from_row_slice(1, v.len(), v);
        let prod = self.mode_product(&row, mode)?;
        let mut shape = prod.shape;
        shape.remove(mode);
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(Self::from_parts(shape, prod.data))
    }

    /// `T_(n) T_(n)ᵀ`, the `d_n × d_n` Gram matrix of the mode-`n` fibers.
    pub fn mode_gram(&self, mode: usize) -> Result<Matrix> {
        let tn = self.matricize(mode)?;
        Ok(&tn * tn.transpose())
    }

    pub fn inner(&self, other: &DenseTensor) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                found: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<Self> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, other: &DenseTensor) -> Result<Self> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|v| alpha * v).collect())
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &DenseTensor) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Reorders modes: mode `k` of the result is mode `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let p = self.order();
        let mut seen = vec![false; p];
        if perm.len() != p || perm.iter().any(|&k| k >= p || std::mem::replace(&mut seen[k], true)) {
            return Err(Error::arg(format!("{perm:?} is not a permutation of 0..{p}")));
        }
        let shape: Vec<usize> = perm.iter().map(|&k| self.shape[k]).collect();
        let mut src = vec![0usize; p];
        Self::from_fn(&shape, |idx| {
            for (k, &i) in idx.iter().enumerate() {
                src[perm[k]] = i;
            }
            self[&src[..]]
        })
    }

    /// Sub-tensor made of the given indices along mode 0, in the given order.
    pub fn select0(&self, rows: &[usize]) -> Result<Self> {
        let d0 = self.shape[0];
        if let Some(&bad) = rows.iter().find(|&&i| i >= d0) {
            return Err(Error::arg(format!("row {bad} out of range for mode-0 size {d0}")));
        }
        if rows.is_empty() {
            return Err(Error::arg("cannot select zero rows"));
        }
        let rest = self.rest(0);
        let n = rows.len();
        let mut data = vec![0.0; n * rest];
        for r in 0..rest {
            for (k, &i) in rows.iter().enumerate() {
                data[k + n * r] = self.data[i + d0 * r];
            }
        }
        let mut shape = self.shape.clone();
        shape[0] = n;
        Ok(Self::from_parts(shape, data))
    }

    /// The slice at index `i` along mode 0, with that mode dropped.
    pub fn slice0(&self, i: usize) -> Result<Self> {
        let mut e = vec![0.0; self.shape[0]];
        *e.get_mut(i)
            .ok_or_else(|| Error::arg(format!("index {i} out of range along mode 0")))? = 1.0;
        self.mode_vector_product(&e, 0)
    }

    /// Stacks equally shaped tensors along a new leading mode.
    pub fn stack(items: &[DenseTensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::arg("cannot stack an empty list"))?;
        let n = items.len();
        let rest = first.len();
        let mut data = vec![0.0; n * rest];
        for (k, t) in items.iter().enumerate() {
            first.same_shape(t)?;
            for (r, &v) in t.data.iter().enumerate() {
                data[k + n * r] = v;
            }
        }
        let mut shape = Vec::with_capacity(first.order() + 1);
        shape.push(n);
        shape.extend_from_slice(&first.shape);
        Ok(Self::from_parts(shape, data))
    }
}

impl Index<&[usize]> for DenseTensor {
    type Output = f64;

    fn index(&self, idx: &[usize]) -> &f64 {
        match self.offset(idx) {
            Some(o) => &self.data[o],
            None => panic!("index {idx:?} out of bounds for shape {:?}", self.shape),
        }
    }
}

/// Odometer increment in storage order (first index fastest).
fn advance(idx: &mut [usize], shape: &[usize]) {
    for (i, &d) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < d {
            return;
        }
        *i = 0;
    }
}
