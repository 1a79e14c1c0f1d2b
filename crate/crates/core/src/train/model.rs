//! Interface shared by the spiking networks and the ANN baseline, so the
//! trainer handles both with the same data, losses and schedule.

use std::ops::Range;

use crate::error::Result;
use crate::matrix::Matrix;
use crate::real::Real;

use super::loss::{objective_grad, LossConfig, Objective};

/// Everything a backward pass needs besides the parameters and the data.
#[derive(Clone, Debug, PartialEq)]
pub struct GradConfig {
    pub objective: Objective,
    pub loss: LossConfig,
    /// Surrogate slope; ignored by non-spiking models.
    pub kappa: f64,
}

pub trait Trainable<F: Real>: Clone + Send + Sync {
    fn param_count(&self) -> usize;

    /// Flat parameter vector in a fixed, model-defined order.
    fn params(&self) -> Vec<F>;

    fn set_params(&mut self, p: &[F]) -> Result<()>;

    /// Flat index ranges that hold leak factors.
    fn leak_ranges(&self) -> Vec<Range<usize>>;

    /// Scaled `T x D` inputs to scaled `T x O` outputs from zero state.
    fn predict(&self, x: &Matrix<F>) -> Result<Matrix<F>>;

    /// Loss of one window and its gradient in [`Trainable::params`] order.
    fn value_and_grad(&self, x: &Matrix<F>, y: &Matrix<F>, cfg: &GradConfig) -> Result<(f64, Vec<F>)>;

    /// Loss of one window without a backward pass.
    fn value(&self, x: &Matrix<F>, y: &Matrix<F>, cfg: &GradConfig) -> Result<f64> {
        let pred = self.predict(x)?;
        Ok(objective_grad(cfg.objective, &pred, y, &cfg.loss)?.0)
    }
}
