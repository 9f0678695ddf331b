//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    /// Added to `sqrt(v_hat)` in the update denominator.
    pub sigma: Real,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            sigma: 1e-5,
            epochs: 30,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: Real| b > 0.0 && b < 1.0;
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::Config(format!(
                "betas must lie in (0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.lr > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::Config(format!("lr and sigma must be positive, got {} and {}", self.lr, self.sigma)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One Adam update over every trainable parameter in `stores`, then zeroes
/// all gradients. Frozen parameters keep their value and optimizer state.
/// Nothing is modified if any trainable gradient is non-finite.
pub fn adam_step(stores: &mut [&mut ParamStore], opt: &OptimizerConfig) -> Result<()> {
    for store in stores.iter() {
        for p in store.iter().filter(|p| p.trainable) {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient(p.name.clone()));
            }
        }
    }
    for store in stores.iter_mut() {
        for p in store.iter_mut() {
            if p.trainable {
                p.step_count += 1;
                let t = p.step_count as i32;
                let c1 = 1.0 - opt.beta1.powi(t);
                let c2 = 1.0 - opt.beta2.powi(t);
                let value = p.value.data_mut();
                for i in 0..value.len() {
                    let g = p.grad[i];
                    p.adam_m[i] = opt.beta1 * p.adam_m[i] + (1.0 - opt.beta1) * g;
                    p.adam_v[i] = opt.beta2 * p.adam_v[i] + (1.0 - opt.beta2) * g * g;
                    let m_hat = p.adam_m[i] / c1;
                    let v_hat = p.adam_v[i] / c2;
                    value[i] -= opt.lr * m_hat / (v_hat.sqrt() + opt.sigma);
                }
            }
            p.zero_grad();
        }
    }
    Ok(())
}
