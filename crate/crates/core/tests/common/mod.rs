//! Oracles and fixtures shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

pub mod grad;
pub mod tape;

use neuroflap::matrix::Matrix;
use neuroflap::snn::{ControllerVariant, LayerKind, Mode, NetworkSpec, SubNetwork, Topology};
use neuroflap::train::{init_subnetwork, InitConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Small random subnetwork in `f64`, either `FF -> REC` or a single `REC`.
pub fn toy_net(seed: u64, max_width: usize) -> SubNetwork<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = rng.random_range(2..=4);
    let outputs = rng.random_range(1..=2);
    let layers = if rng.random_bool(0.5) {
        vec![
            (LayerKind::Feedforward, rng.random_range(3..=max_width)),
            (LayerKind::Recurrent, rng.random_range(3..=max_width)),
        ]
    } else {
        vec![(LayerKind::Recurrent, rng.random_range(3..=max_width))]
    };
    let topo = Topology {
        inputs,
        layers,
        outputs,
    };
    let cfg = InitConfig {
        input_gain: 3.0,
        recurrent_gain: 1.0,
        theta: 0.5,
        ..InitConfig::default()
    };
    init_subnetwork(&topo, &cfg, &mut rng).cast()
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Largest absolute difference over the largest reference magnitude.
pub fn rel_error(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = got
        .iter()
        .zip(want)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Random cascade with a `FF -> REC` estimator and a `REC` controller, unit
/// scales, gains high enough that every layer fires on unit-scale input.
pub fn random_spec(seed: u64, est: (usize, usize), ctl: usize, variant: ControllerVariant) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = InitConfig {
        input_gain: 3.0,
        recurrent_gain: 0.5,
        theta: 1.0,
        ..InitConfig::default()
    };
    NetworkSpec {
        estimator: init_subnetwork(&Topology::estimator(est.0, est.1), &cfg, &mut rng),
        controller: init_subnetwork(&Topology::controller(ctl, variant), &cfg, &mut rng),
        variant,
        mode: Mode::EventDriven,
    }
}

/// `T` rows of standard normal network inputs for `spec`.
pub fn random_inputs(spec: &NetworkSpec, steps: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = spec.estimator.inputs() + spec.ref_dim();
    (0..steps)
        .map(|_| (0..width).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}
