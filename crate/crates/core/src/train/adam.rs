//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::net::Parameter;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, kept in f64 for every parameter element.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Scalar>(cfg: AdamConfig, params: &[Parameter<T>]) -> Self {
        Adam {
            cfg,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update from the gradients stored in `params`:
    /// `θ ← θ − lr · m̂ / (√v̂ + ε)`.
    pub fn step<T: Scalar>(&mut self, params: &mut [Parameter<T>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::invalid("optimizer state does not match the parameter list"));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let grad = p.grad.data();
            let value = p.value.data_mut();
            for e in 0..value.len() {
                let g = grad[e].as_f64();
                m[e] = beta1 * m[e] + (1.0 - beta1) * g;
                v[e] = beta2 * v[e] + (1.0 - beta2) * g * g;
                let mh = m[e] / c1;
                let vh = v[e] / c2;
                value[e] = T::lit(value[e].as_f64() - lr * mh / (vh.sqrt() + epsilon));
            }
        }
        Ok(())
    }
}
