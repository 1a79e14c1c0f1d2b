//! Checkpoints: the trained subnetwork (spiking or ANN), optimizer state,
//! epoch counter and loss history in one archive.

use std::path::Path;

use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::snn::format::{get_subnetwork, put_subnetwork};
use crate::matrix::Matrix;
use crate::snn::{ControllerVariant, Mode, SubNetwork, SubRuntime};

use super::adam::{Adam, AdamConfig};
use super::ann::{get_ann, put_ann, AnnNet, AnnRuntime};
use super::loss::Objective;
use super::trainer::EpochStats;

pub const CHECKPOINT_FORMAT: &str = "neuroflap-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Snn(SubNetwork<f32>),
    Ann(AnnNet<f32>),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Snn(_) => "snn",
            Model::Ann(_) => "ann",
        }
    }

    pub fn inputs(&self) -> usize {
        match self {
            Model::Snn(n) => n.inputs(),
            Model::Ann(n) => n.inputs(),
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            Model::Snn(n) => n.outputs(),
            Model::Ann(n) => n.outputs(),
        }
    }

    /// Physical-unit `T x D` inputs to physical-unit outputs, from zero
    /// state, through the 32-bit runtime.
    pub fn predict(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        let mut row = vec![0.0f32; x.cols()];
        let mut out = Vec::with_capacity(x.rows() * self.outputs());
        let mut push = |y: &[f32]| out.extend(y.iter().map(|&v| v as f64));
        match self {
            Model::Snn(n) => {
                let mut rt = SubRuntime::new(n, Mode::EventDriven)?;
                for k in 0..x.rows() {
                    row.iter_mut().zip(x.row(k)).for_each(|(r, &v)| *r = v as f32);
                    push(rt.step(&row)?);
                }
            }
            Model::Ann(n) => {
                let mut rt = AnnRuntime::new(n)?;
                for k in 0..x.rows() {
                    row.iter_mut().zip(x.row(k)).for_each(|(r, &v)| *r = v as f32);
                    push(rt.step(&row)?);
                }
            }
        }
        Matrix::from_vec(x.rows(), self.outputs(), out)
    }
}

/// What a checkpointed network was trained to do.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Estimator,
    Controller(ControllerVariant),
}

impl Role {
    pub fn objective(self) -> Objective {
        match self {
            Role::Estimator => Objective::Estimator,
            Role::Controller(_) => Objective::Controller,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Estimator => "estimator",
            Role::Controller(v) => v.as_str(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "estimator" => Ok(Role::Estimator),
            other => Ok(Role::Controller(ControllerVariant::parse(other)?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub role: Role,
    pub model: Model,
    pub adam: Adam,
    pub history: Vec<EpochStats>,
    /// Seed the run was started with.
    pub seed: u64,
}

impl Checkpoint {
    pub fn epoch(&self) -> usize {
        self.history.len()
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new(CHECKPOINT_FORMAT, CHECKPOINT_VERSION);
        a.set("role", self.role.as_str());
        a.set("model", self.model.kind());
        a.set("epoch", self.epoch());
        a.set("seed", self.seed);
        let c = &self.adam.config;
        a.set("adam.learning_rate", c.learning_rate);
        a.set("adam.beta1", c.beta1);
        a.set("adam.beta2", c.beta2);
        a.set("adam.eps", c.eps);
        a.set("adam.step", self.adam.step);
        match &self.model {
            Model::Snn(n) => put_subnetwork(&mut a, "net", n),
            Model::Ann(n) => put_ann(&mut a, "net", n),
        }
        let p = self.adam.m.len();
        a.put_f64("adam.m", &[p], &self.adam.m);
        a.put_f64("adam.v", &[p], &self.adam.v);
        let mut hist = Vec::with_capacity(self.history.len() * 3);
        for s in &self.history {
            hist.extend_from_slice(&[s.train_loss, s.val_loss.unwrap_or(f64::NAN), s.val_rho.unwrap_or(f64::NAN)]);
        }
        a.put_f64("history", &[self.history.len(), 3], &hist);
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_format(CHECKPOINT_FORMAT, CHECKPOINT_VERSION)?;
        let role = Role::parse(a.require("role")?)?;
        let model = match a.require("model")? {
            "snn" => Model::Snn(get_subnetwork(a, "net")?),
            "ann" => Model::Ann(get_ann(a, "net")?),
            other => return Err(Error::Format(format!("unknown model kind {other:?}"))),
        };
        let epochs: usize = a.parse_key("epoch")?;
        let p = a.tensor("adam.m")?.dims.first().copied().unwrap_or(0);
        let adam = Adam {
            config: AdamConfig {
                learning_rate: a.parse_key("adam.learning_rate")?,
                beta1: a.parse_key("adam.beta1")?,
                beta2: a.parse_key("adam.beta2")?,
                eps: a.parse_key("adam.eps")?,
            },
            m: a.f64("adam.m", &[p])?,
            v: a.f64("adam.v", &[p])?,
            step: a.parse_key("adam.step")?,
        };
        let raw = a.f64("history", &[epochs, 3])?;
        let opt = |v: f64| if v.is_nan() { None } else { Some(v) };
        let history = raw
            .chunks(3)
            .enumerate()
            .map(|(epoch, c)| EpochStats {
                epoch,
                train_loss: c[0],
                val_loss: opt(c[1]),
                val_rho: opt(c[2]),
            })
            .collect();
        Ok(Self {
            role,
            model,
            adam,
            history,
            seed: a.parse_key("seed")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}
