//! Random parameter initialization for fresh networks.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::matrix::Matrix;
use crate::snn::{LayerKind, NeuronParams, Readout, SpikingLayer, SubNetwork, Topology};

/// Ranges and gains used to draw a fresh parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct InitConfig {
    /// Synaptic leak drawn uniformly from this range.
    pub alpha: (f32, f32),
    /// Membrane leak drawn uniformly from this range.
    pub beta: (f32, f32),
    pub theta: f32,
    /// Standard deviation of `w_in` times `sqrt(fan_in)`.
    pub input_gain: f32,
    /// Standard deviation of `w_rec` times `sqrt(N)`.
    pub recurrent_gain: f32,
    /// Standard deviation of `w_out` times `sqrt(M)`.
    pub readout_gain: f32,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            alpha: (0.80, 0.95),
            beta: (0.80, 0.95),
            theta: 1.0,
            input_gain: 0.4,
            recurrent_gain: 0.3,
            readout_gain: 1.0,
        }
    }
}

fn gaussian<R: Rng>(rows: usize, cols: usize, std: f32, rng: &mut R) -> Matrix<f32> {
    let normal = Normal::new(0.0f32, std.max(0.0)).expect("finite std");
    Matrix::from_fn(rows, cols, |_, _| normal.sample(rng))
}

fn leaks<R: Rng>(n: usize, (lo, hi): (f32, f32), rng: &mut R) -> Vec<f32> {
    if lo >= hi {
        return vec![lo; n];
    }
    let u = Uniform::new(lo, hi).expect("valid leak range");
    (0..n).map(|_| u.sample(rng)).collect()
}

/// Draw a subnetwork for `topo` with unit input and output scales.
pub fn init_subnetwork<R: Rng>(topo: &Topology, cfg: &InitConfig, rng: &mut R) -> SubNetwork<f32> {
    let mut layers = Vec::with_capacity(topo.layers.len());
    let mut width = topo.inputs;
    for &(kind, n) in &topo.layers {
        let w_in = gaussian(n, width, cfg.input_gain / (width.max(1) as f32).sqrt(), rng);
        let w_rec = match kind {
            LayerKind::Recurrent => Some(gaussian(
                n,
                n,
                cfg.recurrent_gain / (n.max(1) as f32).sqrt(),
                rng,
            )),
            LayerKind::Feedforward => None,
        };
        let params = NeuronParams {
            alpha: leaks(n, cfg.alpha, rng),
            beta: leaks(n, cfg.beta, rng),
            theta: vec![cfg.theta; n],
        };
        layers.push(SpikingLayer {
            kind,
            w_in,
            w_rec,
            params,
        });
        width = n;
    }
    let w_out = gaussian(
        topo.outputs,
        width,
        cfg.readout_gain / (width.max(1) as f32).sqrt(),
        rng,
    );
    SubNetwork {
        layers,
        readout: Readout { w_out },
        input_scale: vec![1.0; topo.inputs],
        output_scale: vec![1.0; topo.outputs],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{ControllerVariant, Topology};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_validity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let topo = Topology::estimator(12, 9);
        let net = init_subnetwork(&topo, &InitConfig::default(), &mut rng);
        net.validate().unwrap();
        assert_eq!(net.topology(), topo);
        let ctrl = init_subnetwork(
            &Topology::controller(7, ControllerVariant::Pwm),
            &InitConfig::default(),
            &mut rng,
        );
        assert_eq!(ctrl.outputs(), 2);
        assert!(ctrl.layers[0].w_rec.is_some());
    }

    #[test]
    fn seeded_draws_repeat() {
        let topo = Topology::controller(5, ControllerVariant::YawOffset);
        let a = init_subnetwork(&topo, &InitConfig::default(), &mut ChaCha8Rng::seed_from_u64(4));
        let b = init_subnetwork(&topo, &InitConfig::default(), &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }
}
