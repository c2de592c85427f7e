//! Dense fp64 tensors with a reverse-mode gradient tape.
//!
//! Values live in [`Tensor`] (row-major, 64-bit floats). Differentiable
//! computation is recorded on a [`Tape`]; ops return [`Var`] handles and
//! [`Tape::backward`] accumulates gradients in reverse topological order.
//! A tape and its tensors belong to a single thread; independent tapes
//! share nothing.

mod gradcheck;
mod tape;

pub use gradcheck::{finite_difference_check, finite_difference_check_many};
pub use tape::{Tape, Var};

use crate::error::{Error, Result};

/// Dense n-dimensional array of 64-bit floats, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Contract(format!(
                "tensor shape {:?} does not describe {} elements",
                shape,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    /// 1×n row vector.
    pub fn row(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![1, data.len()],
            data,
        }
    }

    /// n×1 column vector.
    pub fn column(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len(), 1],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    /// Row count of a matrix.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a matrix.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let n = self.cols();
        &self.data[r * n..(r + 1) * n]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> f64 {
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean-normalize every slice along `axis`, leaving (near-)zero
    /// slices untouched. Works for any rank; used off-tape by the feature
    /// store and on-tape through the recorded op.
    pub fn l2_normalized(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.shape.len() {
            return Err(Error::Index {
                what: "axis",
                index: axis,
                size: self.shape.len(),
            });
        }
        let mut out = self.clone();
        let axis_len = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * axis_len * inner + i;
                let mut sq = 0.0;
                for a in 0..axis_len {
                    let v = self.data[base + a * inner];
                    sq += v * v;
                }
                let norm = sq.sqrt();
                if norm > ZERO_NORM_EPS {
                    for a in 0..axis_len {
                        out.data[base + a * inner] /= norm;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Norms at or below this are treated as zero vectors by `l2_normalized`.
pub const ZERO_NORM_EPS: f64 = 1e-12;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn l2_normalize_three_four_five() {
        let t = Tensor::row(vec![3.0, 4.0]);
        let n = t.l2_normalized(1).unwrap();
        assert_eq!(n.data(), &[0.6, 0.8]);
    }

    #[test]
    fn l2_normalize_is_idempotent() {
        let t = Tensor::row(vec![0.2, -1.4, 3.1, 0.0]);
        let once = t.l2_normalized(1).unwrap();
        let twice = once.l2_normalized(1).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn l2_normalize_keeps_zero_vectors() {
        let t = Tensor::matrix(2, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        let n = t.l2_normalized(1).unwrap();
        assert_eq!(n.row_slice(0), &[0.0, 0.0]);
        assert_eq!(n.row_slice(1), &[0.6, 0.8]);
        assert!(n.all_finite());
    }

    #[test]
    fn l2_normalize_depth_axis_of_cube() {
        // shape [C=2, H=1, W=2]; depth vectors are (c0,c1) per (h,w)
        let t = Tensor::new(vec![2, 1, 2], vec![3.0, 0.0, 4.0, 2.0]).unwrap();
        let n = t.l2_normalized(0).unwrap();
        // position (0,0): [3,4] -> [0.6,0.8]; position (0,1): [0,2] -> [0,1]
        assert!((n.data()[0] - 0.6).abs() < 1e-15);
        assert!((n.data()[2] - 0.8).abs() < 1e-15);
        assert!((n.data()[1] - 0.0).abs() < 1e-15);
        assert!((n.data()[3] - 1.0).abs() < 1e-15);
    }
}
