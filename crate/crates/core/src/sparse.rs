//! Compressed sparse row storage for the recurrent matrix.

use ndarray::{Array2, ArrayView1, ArrayViewMut1};

use crate::error::{check_dim, Result};
use crate::scalar::Scalar;

/// Square or rectangular matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from `(row, col, value)` triplets. Triplets must be sorted by
    /// row then column and contain no duplicates.
    pub fn from_sorted_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            debug_assert!(r < rows && c < cols);
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Keeps every nonzero entry of a dense matrix.
    pub fn from_dense(dense: &Array2<T>) -> Self {
        let (rows, cols) = dense.dim();
        let mut triplets = Vec::new();
        for ((r, c), &v) in dense.indexed_iter() {
            if v != T::zero() {
                triplets.push((r, c, v));
            }
        }
        Self::from_sorted_triplets(rows, cols, &triplets)
    }

    pub(crate) fn from_raw_parts(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Option<Self> {
        if row_ptr.len() != rows + 1
            || row_ptr[0] != 0
            || row_ptr[rows] != values.len()
            || col_idx.len() != values.len()
            || row_ptr.windows(2).any(|w| w[0] > w[1])
            || col_idx.iter().any(|&c| c >= cols)
        {
            return None;
        }
        Some(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Multiplies every stored value by `factor`.
    pub fn scale(&mut self, factor: T) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[(r, self.col_idx[k])] = self.values[k];
            }
        }
        out
    }

    /// `out = scale * self * x + out_scale * out`
    pub fn gemv(&self, scale: T, x: ArrayView1<'_, T>, out_scale: T, mut out: ArrayViewMut1<'_, T>) -> Result<()> {
        check_dim("sparse matvec input", self.cols, x.len())?;
        check_dim("sparse matvec output", self.rows, out.len())?;
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = scale * acc + out_scale * *o;
        }
        Ok(())
    }

    /// Plain slice matvec used by the eigenvalue iteration.
    pub(crate) fn apply_f64(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k].f64() * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn dense_round_trip_and_matvec() {
        let d = array![[0.0, 2.0, 0.0], [1.0, 0.0, -3.0]];
        let m = CsrMatrix::from_dense(&d);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.to_dense(), d);
        let x = array![1.0, 2.0, 3.0];
        let mut y = Array1::from_elem(2, 10.0);
        m.gemv(2.0, x.view(), 0.5, y.view_mut()).unwrap();
        assert_eq!(y, array![2.0 * 4.0 + 5.0, 2.0 * -8.0 + 5.0]);
    }

    #[test]
    fn matvec_dimension_errors() {
        let m = CsrMatrix::<f64>::from_dense(&Array2::eye(2));
        let x = Array1::zeros(3);
        let mut y = Array1::zeros(2);
        assert!(m.gemv(1.0, x.view(), 0.0, y.view_mut()).is_err());
    }

    #[test]
    fn raw_parts_validation() {
        assert!(CsrMatrix::<f64>::from_raw_parts(2, 2, vec![0, 1, 2], vec![0, 1], vec![1.0, 1.0]).is_some());
        assert!(CsrMatrix::<f64>::from_raw_parts(2, 2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_none());
        assert!(CsrMatrix::<f64>::from_raw_parts(2, 2, vec![0, 1, 2], vec![0, 5], vec![1.0, 1.0]).is_none());
    }
}
