//! From flight logs to a trained checkpoint: features, split, scales,
//! windows, initialization and the training loop.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expert::FlightLog;
use crate::snn::Topology;

use super::adam::Adam;
use super::ann::{init_ann, AnnNet};
use super::checkpoint::{Checkpoint, Model, Role};
use super::dataset::{
    controller_features, estimator_features, rms_scales, validation_count, window_dataset,
    Features, ScaledDataset,
};
use super::init::{init_subnetwork, InitConfig};
use super::trainer::{EpochStats, TrainConfig, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Snn,
    Ann,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "snn" => Ok(ModelKind::Snn),
            "ann" => Ok(ModelKind::Ann),
            other => Err(Error::Format(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Hidden-layer widths; the estimator uses both, the controller only `recurrent`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sizes {
    pub estimator_ff: usize,
    pub estimator_rec: usize,
    pub controller_rec: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Self {
            estimator_ff: 150,
            estimator_rec: 150,
            controller_rec: 130,
        }
    }
}

impl Sizes {
    pub fn uniform(n: usize) -> Self {
        Self {
            estimator_ff: n,
            estimator_rec: n,
            controller_rec: n,
        }
    }

    pub fn topology(&self, role: Role) -> Topology {
        match role {
            Role::Estimator => Topology::estimator(self.estimator_ff, self.estimator_rec),
            Role::Controller(v) => Topology::controller(self.controller_rec, v),
        }
    }
}

/// Physical-unit features of every log for a role.
pub fn role_features(logs: &[FlightLog], role: Role) -> Result<Vec<Features>> {
    logs.iter()
        .map(|l| match role {
            Role::Estimator => estimator_features(l),
            Role::Controller(v) => controller_features(l, v),
        })
        .collect()
}

/// Scaled training and validation windows plus the log split.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: ScaledDataset<f32>,
    pub val: ScaledDataset<f32>,
    pub train_logs: Range<usize>,
    pub val_logs: Range<usize>,
}

/// Hold out the trailing logs, derive scales from the rest, cut windows.
pub fn prepare(features: &[Features], cfg: &TrainConfig) -> Result<Prepared> {
    let n_val = validation_count(features.len(), cfg.validation_fraction);
    let split = features.len() - n_val;
    if split == 0 {
        return Err(Error::contract("no logs left for training"));
    }
    let train_f = &features[..split];
    let input_scale = rms_scales(train_f.iter().map(|f| &f.inputs))?;
    let output_scale = rms_scales(train_f.iter().map(|f| &f.targets))?;
    let train = window_dataset(train_f, &cfg.window, &input_scale, &output_scale)?;
    let val = window_dataset(&features[split..], &cfg.window, &input_scale, &output_scale)?;
    Ok(Prepared {
        train,
        val,
        train_logs: 0..split,
        val_logs: split..features.len(),
    })
}

fn scales_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&c| c as f32).collect()
}

/// Fresh model for a role with the dataset's scales installed.
pub fn init_model(kind: ModelKind, topo: &Topology, init: &InitConfig, data: &ScaledDataset<f32>, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        ModelKind::Snn => {
            let mut net = init_subnetwork(topo, init, &mut rng);
            net.input_scale = scales_f32(&data.input_scale);
            net.output_scale = scales_f32(&data.output_scale);
            Model::Snn(net)
        }
        ModelKind::Ann => {
            let mut net: AnnNet<f32> = init_ann(topo, 1.0, 0.5, &mut rng);
            net.input_scale = scales_f32(&data.input_scale);
            net.output_scale = scales_f32(&data.output_scale);
            Model::Ann(net)
        }
    }
}

/// Outcome of [`fit`]: the checkpoint plus an early-stop reason.
#[derive(Clone, Debug)]
pub struct Fitted {
    pub checkpoint: Checkpoint,
    pub stopped: Option<String>,
    pub train_logs: Range<usize>,
    pub val_logs: Range<usize>,
}

/// Train a new model for `role` on `logs`.
pub fn fit(
    logs: &[FlightLog],
    role: Role,
    kind: ModelKind,
    sizes: &Sizes,
    init: &InitConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &Checkpoint),
) -> Result<Fitted> {
    let features = role_features(logs, role)?;
    let prep = prepare(&features, cfg)?;
    if prep.train.is_empty() {
        return Err(Error::contract("no training windows; logs are shorter than the window"));
    }
    let topo = sizes.topology(role);
    check_topology(&topo)?;
    let model = init_model(kind, &topo, init, &prep.train, cfg.seed);
    let val = (!prep.val.is_empty()).then_some(&prep.val);
    let objective = role.objective();
    let mut seen: Vec<EpochStats> = Vec::new();
    let mut report = |s: &EpochStats, model: Model, adam: &Adam| {
        seen.push(*s);
        on_epoch(
            s,
            &Checkpoint {
                role,
                model,
                adam: adam.clone(),
                history: seen.clone(),
                seed: cfg.seed,
            },
        )
    };
    let (model, adam, history, stopped) = match model {
        Model::Snn(net) => {
            let t = Trainer::new(net, cfg.clone(), objective)?;
            let out = t.fit(&prep.train, val, |s, m, a| report(s, Model::Snn(m.clone()), a))?;
            (Model::Snn(out.model), out.adam, out.history, out.stopped)
        }
        Model::Ann(net) => {
            let t = Trainer::new(net, cfg.clone(), objective)?;
            let out = t.fit(&prep.train, val, |s, m, a| report(s, Model::Ann(m.clone()), a))?;
            (Model::Ann(out.model), out.adam, out.history, out.stopped)
        }
    };
    Ok(Fitted {
        checkpoint: Checkpoint {
            role,
            model,
            adam,
            history,
            seed: cfg.seed,
        },
        stopped,
        train_logs: prep.train_logs,
        val_logs: prep.val_logs,
    })
}

fn check_topology(topo: &Topology) -> Result<()> {
    if topo.layers.iter().any(|&(_, n)| n == 0) {
        return Err(Error::contract("hidden layers need at least one neuron"));
    }
    Ok(())
}
