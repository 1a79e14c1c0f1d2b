//! Adaptive-moment optimizer over a flat parameter vector.

use std::ops::Range;

use crate::error::{check_len, Error, Result};
use crate::real::Real;

/// Leak factors are kept inside `[LEAK_MIN, LEAK_MAX]` after every update.
pub const LEAK_MIN: f64 = 1e-4;
pub const LEAK_MAX: f64 = 1.0 - 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates and step counter; owned by a single trainer.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; params],
            v: vec![0.0; params],
            step: 0,
        }
    }

    /// One update. A non-finite gradient aborts before anything changes.
    pub fn update<F: Real>(&mut self, params: &mut [F], grads: &[F], leaks: &[Range<usize>]) -> Result<()> {
        check_len("optimizer parameters", self.m.len(), params.len())?;
        check_len("optimizer gradients", self.m.len(), grads.len())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient entry {i} at optimizer step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let g = g.as_f64();
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let delta = c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
            if delta != 0.0 {
                *p = F::lit(p.as_f64() - delta);
            }
        }
        let (lo, hi) = (F::lit(LEAK_MIN), F::lit(LEAK_MAX));
        for r in leaks {
            for p in &mut params[r.clone()] {
                *p = p.max(lo).min(hi);
            }
        }
        Ok(())
    }
}
