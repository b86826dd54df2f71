use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{c, Scalar, TensorError};

/// A dense n-dimensional array of scalars in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor from raw data, validating the shape/data contract.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        validate_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                shape,
                expected,
                actual: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite("tensor construction"));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, TensorError> {
        validate_shape(&shape)?;
        let n = shape.iter().product();
        Ok(Tensor {
            shape,
            data: vec![T::zero(); n],
            requires_grad: false,
        })
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
        }
    }

    /// Seed-deterministic standard-normal tensor.
    pub fn randn(shape: Vec<usize>, seed: u64) -> Result<Self, TensorError> {
        validate_shape(&shape)?;
        let n: usize = shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                c(z)
            })
            .collect();
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
        })
    }

    pub fn requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn is_grad_required(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Extent of the last axis.
    pub fn last_extent(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    /// Number of rows when the tensor is viewed as [rows, last_extent].
    pub fn row_count(&self) -> usize {
        self.numel() / self.last_extent()
    }
}

pub(crate) fn validate_shape(shape: &[usize]) -> Result<(), TensorError> {
    if shape.is_empty() {
        return Err(TensorError::EmptyShape);
    }
    if shape.iter().any(|&e| e == 0) {
        return Err(TensorError::ZeroExtent(shape.to_vec()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn randn_is_deterministic_per_seed() {
        let a = Tensor::<f64>::randn(vec![2, 2], 7).unwrap();
        let b = Tensor::<f64>::randn(vec![2, 2], 7).unwrap();
        assert_eq!(a.data(), b.data());
        let c = Tensor::<f64>::randn(vec![2, 2], 8).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn randn_sample_mean_converges() {
        // Law-of-large-numbers check at 1e5 samples: |mean| stays under 0.02.
        let t = Tensor::<f64>::randn(vec![100_000], 1).unwrap();
        let mean: f64 = t.data().iter().sum::<f64>() / t.numel() as f64;
        assert!(mean.abs() < 0.02, "sample mean {mean}");
        let sd = (t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / t.numel() as f64)
            .sqrt();
        assert!((sd - 1.0).abs() < 0.02, "sample sd {sd}");
    }

    #[test]
    fn zero_extent_is_rejected() {
        assert_eq!(
            Tensor::<f64>::randn(vec![2, 0], 1).unwrap_err(),
            TensorError::ZeroExtent(vec![2, 0])
        );
        assert_eq!(
            Tensor::<f64>::zeros(vec![]).unwrap_err(),
            TensorError::EmptyShape
        );
    }

    #[test]
    fn data_length_must_match_shape() {
        let err = Tensor::new(vec![2, 2], vec![1.0f64; 3]).unwrap_err();
        assert!(matches!(err, TensorError::DataLength { .. }));
    }

    #[test]
    fn non_finite_data_is_rejected() {
        let err = Tensor::new(vec![2], vec![1.0f64, f64::NAN]).unwrap_err();
        assert_eq!(err, TensorError::NonFinite("tensor construction"));
    }

    #[test]
    fn randn_works_for_f32() {
        let t = Tensor::<f32>::randn(vec![8], 3).unwrap();
        assert_eq!(t.numel(), 8);
    }
}
