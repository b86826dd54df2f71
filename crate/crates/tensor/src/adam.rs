use crate::tensor::Tensor;
use crate::{c, Scalar, TensorError};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        AdamConfig {
            learning_rate: c(1e-3),
            beta1: c(0.9),
            beta2: c(0.999),
            epsilon: c(1e-8),
        }
    }
}

impl<T: Scalar> AdamConfig<T> {
    pub fn with_learning_rate(lr: T) -> Self {
        AdamConfig {
            learning_rate: lr,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam state: per-parameter first/second moment
/// accumulators plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    config: AdamConfig<T>,
    step: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig<T>, params: &[Tensor<T>]) -> Self {
        AdamState {
            config,
            step: 0,
            first_moment: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            second_moment: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig<T> {
        &self.config
    }

    /// One bias-corrected update over every parameter tensor. Zero
    /// gradients leave parameters untouched.
    pub fn step(
        &mut self,
        params: &mut [Tensor<T>],
        grads: &[&[T]],
    ) -> Result<(), TensorError> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(TensorError::GradientCount {
                params: params.len(),
                grads: grads.len(),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.numel() != g.len() {
                return Err(TensorError::GradientCount {
                    params: p.numel(),
                    grads: g.len(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let m_corr = T::one() - beta1.powi(t);
        let v_corr = T::one() - beta2.powi(t);

        for (idx, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[idx];
            let v = &mut self.second_moment[idx];
            let data = param.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (T::one() - beta1) * g;
                v[i] = beta2 * v[i] + (T::one() - beta2) * g * g;
                let m_hat = m[i] / m_corr;
                let v_hat = v[i] / v_corr;
                data[i] = data[i] - learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
