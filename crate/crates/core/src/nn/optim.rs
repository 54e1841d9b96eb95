//! Adam optimization and reduce-on-plateau learning-rate scheduling.

use crate::error::{Error, Result};
use crate::nn::layers::Param;
use crate::nn::tensor::Tensor;

/// Adam with bias correction. Moment buffers are allocated lazily on the
/// first step from the parameter shapes and must see the same parameter
/// ordering on every call.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl Adam {
    pub const DEFAULT_LR: f64 = 1e-3;

    pub fn new(learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// Applies one update from each parameter's accumulated gradient.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len() {
            return Err(Error::Shape("optimizer state does not match parameter list".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, param) in params.iter_mut().enumerate() {
            if !param.grad.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in parameter slot {i}; aborting training"
                )));
            }
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            let g = param.grad.data();
            let p = param.value.data_mut();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Halves the learning rate once the monitored loss stops improving by more
/// than `threshold` for `patience` consecutive epochs; the stagnation
/// counter resets after each reduction. The rate never drops below `min_lr`.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    pub threshold: f64,
    best: f64,
    stale_epochs: usize,
}

impl PlateauScheduler {
    pub const DEFAULT_THRESHOLD: f64 = 1e-4;

    pub fn new(patience: usize, factor: f64, min_lr: f64) -> PlateauScheduler {
        PlateauScheduler {
            patience,
            factor,
            min_lr,
            threshold: Self::DEFAULT_THRESHOLD,
            best: f64::INFINITY,
            stale_epochs: 0,
        }
    }

    /// Feeds one epoch's monitored loss; returns the learning rate to use next.
    pub fn observe(&mut self, loss: f64, current_lr: f64) -> f64 {
        if loss < self.best - self.threshold {
            self.best = loss;
            self.stale_epochs = 0;
            return current_lr;
        }
        self.stale_epochs += 1;
        if self.stale_epochs >= self.patience {
            self.stale_epochs = 0;
            return (current_lr * self.factor).max(self.min_lr);
        }
        current_lr
    }
}

/// Replays a loss history through the plateau rule; returns the final rate.
pub fn reduce_lr_on_plateau(
    history: &[f64],
    patience: usize,
    factor: f64,
    min_lr: f64,
    initial_lr: f64,
) -> f64 {
    let mut sched = PlateauScheduler::new(patience, factor, min_lr);
    let mut lr = initial_lr;
    for &loss in history {
        lr = sched.observe(loss, lr);
    }
    lr
}
