//! Dense `f64` tensors, row-major, rank 0 (scalar) through 2 (matrix).
//!
//! This is deliberately minimal: just enough shape bookkeeping for the
//! computation graph in [`crate::autodiff`]. No broadcasting, no views.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Shape of a tensor: a list of dimensions, every entry >= 1.
/// Rank 0 (empty list) denotes a scalar.
pub type Shape = Vec<usize>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    dims: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Shape, data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!("zero-sized dim in {dims:?}")));
        }
        if dims.len() > 3 {
            return Err(Error::Dimension(format!("rank {} > 3", dims.len())));
        }
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::Dimension(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Shape) -> Self {
        let n: usize = dims.iter().product();
        Tensor { dims, data: vec![0.0; n] }
    }

    pub fn filled(dims: Shape, v: f64) -> Self {
        let n: usize = dims.iter().product();
        Tensor { dims, data: vec![v; n] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { dims: vec![], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { dims: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Identity matrix of size n.
    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Uniform random entries in (lo, hi).
    pub fn uniform<R: Rng>(dims: Shape, lo: f64, hi: f64, rng: &mut R) -> Self {
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.dims.is_empty()
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.data.len() == 1);
        self.data[0]
    }

    /// Rows of a rank-2 tensor; a vector is a single row, a scalar 1x1.
    pub fn rows(&self) -> usize {
        match self.dims.len() {
            2 => self.dims[0],
            _ => 1,
        }
    }

    /// Columns of a rank-2 tensor (or the length of a vector).
    pub fn cols(&self) -> usize {
        match self.dims.len() {
            2 => self.dims[1],
            1 => self.dims[0],
            _ => 1,
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        let cols = self.cols();
        &mut self.data[r * cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.dims == other.dims
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// self += other (same shape).
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, c: f64) {
        for v in self.data.iter_mut() {
            *v *= c;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reshape into `dims` (element count must match).
    pub fn reshaped(&self, dims: Shape) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        if n != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {:?}",
                self.dims, dims
            )));
        }
        Ok(Tensor { dims, data: self.data.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dims() {
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(Tensor::new(vec![2, 2], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn matrix_indexing_row_major() {
        let t = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.at(0, 2), 3.0);
        assert_eq!(t.at(1, 0), 4.0);
        assert_eq!(t.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn eye_is_identity() {
        let i = Tensor::eye(3);
        assert_eq!(i.at(0, 0), 1.0);
        assert_eq!(i.at(0, 1), 0.0);
        assert_eq!(i.sum(), 3.0);
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]);
        let m = t.reshaped(vec![2, 2]).unwrap();
        assert_eq!(m.at(1, 1), 4.0);
        assert!(t.reshaped(vec![3, 2]).is_err());
    }
}
