use std::fmt;
use std::sync::Arc;

use crate::error::{dim_err, Result};

use super::mem;

/// Flat f64 storage that reports its size to the allocation counters.
struct Buffer(Vec<f64>);

impl Buffer {
    fn new(data: Vec<f64>) -> Self {
        mem::on_alloc(data.capacity() * std::mem::size_of::<f64>());
        Buffer(data)
    }
}

impl Drop for Buffer {
    fn drop(&mut self) {
        mem::on_free(self.0.capacity() * std::mem::size_of::<f64>());
    }
}

/// Dense row-major array of f64 values.
///
/// Values are immutable once built; clones share the underlying buffer.
/// Every dimension is at least 1, so a scalar has shape `[1]`.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Buffer>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        if shape.is_empty() || shape.contains(&0) {
            return Err(dim_err!("shape {shape:?} must have at least one dimension, all >= 1"));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(dim_err!(
                "shape {shape:?} holds {numel} elements but {} values were given",
                data.len()
            ));
        }
        Ok(Tensor {
            shape,
            data: Arc::new(Buffer::new(data)),
        })
    }

    /// One-dimensional tensor. Panics on an empty vector.
    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor::new(vec![n], data).expect("from_vec needs a non-empty vector")
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_vec(vec![value])
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Result<Self> {
        let shape = shape.into();
        let numel = shape.iter().product();
        Tensor::new(shape, vec![value; numel])
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::full(shape, 0.0)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.0.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.0.clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.numel() == 1).then(|| self.data.0[0])
    }

    /// Same values under a new shape with equal element count. Shares storage.
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.is_empty() || shape.contains(&0) {
            return Err(dim_err!("invalid target shape {shape:?}"));
        }
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(dim_err!(
                "cannot reshape {:?} ({} elements) into {shape:?}",
                self.shape,
                self.numel()
            ));
        }
        Ok(Tensor {
            shape,
            data: Arc::clone(&self.data),
        })
    }

    /// Elementwise map into a new tensor of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let data = self.data().iter().map(|&v| f(v)).collect();
        Tensor::new(self.shape.clone(), data).expect("shape preserved")
    }

    /// Bitwise equality of shape and values.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data()
                .iter()
                .zip(other.data())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        let data = self.data();
        write!(f, "Tensor{:?}[", self.shape)?;
        for (i, v) in data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if data.len() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "]")
    }
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data() == other.data()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dims_and_count_mismatch() {
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(Vec::<usize>::new(), vec![1.0]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn reshape_keeps_row_major_order() {
        let t = Tensor::new(vec![2, 6], (0..12).map(f64::from).collect()).unwrap();
        let r = t.reshape(vec![3, 4]).unwrap();
        assert_eq!(r.shape(), &[3, 4]);
        assert_eq!(r.data(), t.data());
        assert_eq!(r.reshape(vec![2, 6]).unwrap(), t);
        assert!(t.reshape(vec![5, 2]).is_err());
    }

    #[test]
    fn buffers_are_counted() {
        let before = mem::live_bytes();
        let t = Tensor::zeros(vec![100]).unwrap();
        assert!(mem::live_bytes() >= before + 800);
        drop(t);
        assert_eq!(mem::live_bytes(), before);
    }
}
