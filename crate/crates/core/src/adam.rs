//! Adam optimizer with bias-corrected moment estimates.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Element, Tensor};

/// Elements per parallel chunk for the elementwise update.
const ELEM_CHUNK: usize = 1 << 14;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "adam learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::InvalidConfig(format!(
                    "adam {name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "adam epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Optimizer state: first/second moment estimates per parameter tensor
/// plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T = f32> {
    config: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Element> Adam<T> {
    /// Fresh state for parameters shaped like `params`.
    pub fn new(config: AdamConfig, params: &[&Tensor<T>]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
        })
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Completed update steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Moment tensors in parameter order, `(m, v)` — exposed for
    /// checkpointing.
    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }

    /// Restore state saved by a checkpoint. Moment shapes must match the
    /// parameter layout this state was created for.
    pub(crate) fn restore(&mut self, step: u64, m: Vec<Tensor<T>>, v: Vec<Tensor<T>>) -> Result<()> {
        let shapes_match = m.len() == self.m.len()
            && v.len() == self.v.len()
            && m.iter().zip(&self.m).all(|(a, b)| a.shape() == b.shape())
            && v.iter().zip(&self.v).all(|(a, b)| a.shape() == b.shape());
        if !shapes_match {
            return Err(Error::CheckpointCorrupt {
                detail: "optimizer moment shapes do not match the model".into(),
            });
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// Apply one update: `params[i] -= lr_t * m̂ / (sqrt(v̂) + eps)`.
    ///
    /// `grads` must align with `params` one-to-one (the order used at
    /// construction). The grads are checked for non-finite values so
    /// divergence surfaces as a structured error instead of silent NaNs.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                context: "adam parameter/gradient lists",
                expected: vec![self.m.len()],
                actual: vec![params.len(), grads.len()],
            });
        }
        self.step += 1;
        let t = self.step;
        for g in grads {
            if !g.all_finite() {
                return Err(Error::NumericDivergence {
                    quantity: "gradient",
                    step: t,
                });
            }
        }
        // Canonical bias correction: m̂ = m/(1-beta1^t), v̂ = v/(1-beta2^t),
        // then p -= lr · m̂ / (sqrt(v̂) + eps).
        let c = &self.config;
        let lr = T::from_f64_lossy(c.learning_rate);
        let bc1 = T::from_f64_lossy(1.0 / (1.0 - c.beta1.powi(t as i32)));
        let bc2 = T::from_f64_lossy(1.0 / (1.0 - c.beta2.powi(t as i32)));
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one_m_b1 = T::one() - b1;
        let one_m_b2 = T::one() - b2;
        let eps = T::from_f64_lossy(c.epsilon);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::ShapeMismatch {
                    context: "adam parameter vs gradient",
                    expected: p.shape().to_vec(),
                    actual: g.shape().to_vec(),
                });
            }
            let g_data = g.data();
            let v_data = v.data_mut();
            // Update moments in place, then the parameter.
            par::for_each_chunk_mut(m.data_mut(), ELEM_CHUNK, |ci, m_chunk| {
                let base = ci * ELEM_CHUNK;
                for (i, mi) in m_chunk.iter_mut().enumerate() {
                    *mi = b1 * *mi + one_m_b1 * g_data[base + i];
                }
            });
            par::for_each_chunk_mut(v_data, ELEM_CHUNK, |ci, v_chunk| {
                let base = ci * ELEM_CHUNK;
                for (i, vi) in v_chunk.iter_mut().enumerate() {
                    let gi = g_data[base + i];
                    *vi = b2 * *vi + one_m_b2 * gi * gi;
                }
            });
            let m_data = m.data();
            let v_data = v.data();
            par::for_each_chunk_mut(p.data_mut(), ELEM_CHUNK, |ci, p_chunk| {
                let base = ci * ELEM_CHUNK;
                for (i, pi) in p_chunk.iter_mut().enumerate() {
                    let m_hat = m_data[base + i] * bc1;
                    let v_hat = v_data[base + i] * bc2;
                    *pi = *pi - lr * m_hat / (v_hat.sqrt() + eps);
                }
            });
        }
        Ok(())
    }
}
