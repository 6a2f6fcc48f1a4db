//! Small dense f64 matrix used for node/edge feature batches and MLP weights.
//!
//! Row-major storage. The matmul kernels come in sequential and (behind the
//! `parallel` feature) rayon-parallel flavors; rows are independent, so both
//! produce bitwise-identical results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("ragged rows in dense matrix"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "matrix data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// C = self * other, dispatching to the parallel kernel when enabled.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        #[cfg(feature = "parallel")]
        {
            self.matmul_par(other)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.matmul_seq(other)
        }
    }

    pub fn matmul_seq(&self, other: &Matrix) -> Result<Matrix> {
        self.check_inner(other)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            matmul_row(self.row(i), other, out.row_mut(i));
        }
        Ok(out)
    }

    #[cfg(feature = "parallel")]
    pub fn matmul_par(&self, other: &Matrix) -> Result<Matrix> {
        use rayon::prelude::*;
        self.check_inner(other)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        out.data
            .par_chunks_mut(other.cols)
            .enumerate()
            .for_each(|(i, out_row)| {
                matmul_row(self.row(i), other, out_row);
            });
        Ok(out)
    }

    /// C = self^T * other. Used for weight gradients (X^T dZ).
    pub fn matmul_at_b(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::dim(format!(
                "matmul_at_b: {} rows vs {} rows",
                self.rows, other.rows
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for i in 0..self.cols {
                let a = a_row[i];
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for j in 0..other.cols {
                    out_row[j] += a * b_row[j];
                }
            }
        }
        Ok(out)
    }

    /// C = self * other^T. Used for input gradients (dZ W^T).
    pub fn matmul_a_bt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dim(format!(
                "matmul_a_bt: {} cols vs {} cols",
                self.cols, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (j, out_val) in out_row.iter_mut().enumerate() {
                let b_row = other.row(j);
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += a_row[k] * b_row[k];
                }
                *out_val = acc;
            }
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    fn check_inner(&self, other: &Matrix) -> Result<()> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "matmul: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

#[inline]
fn matmul_row(a_row: &[f64], b: &Matrix, out_row: &mut [f64]) {
    for (k, &a) in a_row.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let b_row = b.row(k);
        for (o, &bv) in out_row.iter_mut().zip(b_row) {
            *o += a * bv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_hand_example() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let c = a.matmul_seq(&b).unwrap();
        assert_eq!(c.data, vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![3.0, 4.0, -1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, -1.0], vec![1.5, 2.5]]).unwrap();
        let atb = a.matmul_at_b(&a).unwrap();
        assert_eq!(atb, a.transpose().matmul_seq(&a).unwrap());
        let abt = a.matmul_a_bt(&b.transpose()).unwrap();
        assert_eq!(abt, a.matmul_seq(&b).unwrap());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_matmul_is_bitwise_equal_to_sequential() {
        let mut a = Matrix::zeros(17, 13);
        let mut b = Matrix::zeros(13, 9);
        for (i, v) in a.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        for (i, v) in b.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.11).cos();
        }
        assert_eq!(a.matmul_seq(&b).unwrap(), a.matmul_par(&b).unwrap());
    }

    #[test]
    fn mismatched_dims_error() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(4, 2);
        assert!(a.matmul_seq(&b).is_err());
    }
}
