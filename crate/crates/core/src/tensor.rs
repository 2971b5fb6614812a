//! Dense row-major f64 tensor.
//!
//! Training and gradient checking run in 64-bit throughout; the 32-bit
//! representation exists only in the on-disk format handled by the companion
//! crate.

use crate::error::CoreError;
use crate::math;
use crate::Result;
use alloc::format;
use alloc::vec::Vec;

/// Dense tensor: a shape and a row-major f64 buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, validating that the buffer length matches the shape.
    pub fn from_vec(dims: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if dims.iter().any(|&d| d == 0) {
            return Err(CoreError::Shape(format!("zero-sized dimension in {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(CoreError::Shape(format!(
                "shape {dims:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    /// Like `from_vec`, additionally rejecting NaN/Inf entries. Used when the
    /// payload arrives from a file.
    pub fn from_vec_checked(dims: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(format!(
                "payload entry {i} is {}",
                data[i]
            )));
        }
        Tensor::from_vec(dims, data)
    }

    pub fn zeros(dims: Vec<usize>) -> Tensor {
        let n: usize = dims.iter().product();
        Tensor {
            dims,
            data: alloc::vec![0.0; n],
        }
    }

    pub fn filled(dims: Vec<usize>, value: f64) -> Tensor {
        let n: usize = dims.iter().product();
        Tensor {
            dims,
            data: alloc::vec![value; n],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
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

    /// Number of rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.dims[0]
    }

    /// Number of columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    fn require_2d(&self, what: &str) -> Result<(usize, usize)> {
        if self.dims.len() != 2 {
            return Err(CoreError::Shape(format!(
                "{what} expects a 2-D tensor, got shape {:?}",
                self.dims
            )));
        }
        Ok((self.dims[0], self.dims[1]))
    }

    /// Matrix product. Summation over the inner dimension runs left to right,
    /// so results are bit-reproducible.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.require_2d("matmul lhs")?;
        let (k2, n) = other.require_2d("matmul rhs")?;
        if k != k2 {
            return Err(CoreError::Shape(format!(
                "matmul inner dims differ: {m}x{k} vs {k2}x{n}"
            )));
        }
        let mut out = alloc::vec![0.0; m * n];
        // i-k-j order: each out[i][j] accumulates over k ascending.
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * n..(i + 1) * n];
            for (kk, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[kk * n..(kk + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::from_vec(alloc::vec![m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.require_2d("transpose")?;
        let mut out = alloc::vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::from_vec(alloc::vec![n, m], out)
    }

    /// Elementwise map into a new tensor.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += scale * other`; shapes must match.
    pub fn axpy(&mut self, scale: f64, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(CoreError::Shape(format!(
                "axpy shapes differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.data.iter_mut() {
            *v *= s;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// True if every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Gather rows by index into a new tensor, preserving the given order.
    pub fn take_rows(&self, idx: &[usize]) -> Result<Tensor> {
        let cols = self.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &r in idx {
            if r >= self.rows() {
                return Err(CoreError::Index(format!(
                    "row {r} outside tensor of {} rows",
                    self.rows()
                )));
            }
            data.extend_from_slice(self.row(r));
        }
        Tensor::from_vec(alloc::vec![idx.len(), cols], data)
    }
}

/// Elementwise logistic function; outputs stay in the open interval (0, 1).
pub fn sigmoid(t: &Tensor) -> Tensor {
    t.map(math::sigmoid)
}
