use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::tape::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient. Zero disables it.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adaptive-moment optimiser state for every tensor of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || -> Vec<Matrix> {
            params
                .tensors()
                .iter()
                .map(|t| Matrix::zeros(t.value.rows(), t.value.cols()))
                .collect()
        };
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update using the gradients stored on `params`.
    /// Tensors without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ParamStore) {
        assert_eq!(params.len(), self.first.len(), "optimizer built for another store");
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);

        for (i, t) in params.tensors_mut().iter_mut().enumerate() {
            if !t.requires_grad {
                continue;
            }
            let Some(grad) = t.grad.as_ref() else {
                log::warn!("parameter #{i} has no gradient; skipped");
                continue;
            };
            let m = self.first[i].as_mut_slice();
            let v = self.second[i].as_mut_slice();
            let p = t.value.as_mut_slice();
            for (((p, g), m), v) in p.iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
                let g = g + weight_decay * *p;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
