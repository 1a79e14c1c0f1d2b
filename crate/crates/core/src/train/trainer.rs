//! Mini-batch BPTT loop shared by the spiking networks and the ANN.

use std::io::Write;
use std::marker::PhantomData;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;

use super::adam::{Adam, AdamConfig};
use super::dataset::{shuffled_order, ScaledDataset, WindowConfig};
use super::loss::{objective_grad, pearson_batch, LossConfig, Objective};
use super::model::{GradConfig, Trainable};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub window: WindowConfig,
    pub loss: LossConfig,
    /// Surrogate slope.
    pub kappa: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Rescale the batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    /// Trailing share of logs held out for validation.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            loss: LossConfig::default(),
            kappa: 25.0,
            adam: AdamConfig::default(),
            epochs: 50,
            batch_size: 8,
            seed: 0,
            clip_norm: Some(1.0),
            validation_fraction: 0.15,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.loss.validate()?;
        if self.loss.burn_in >= self.window.len {
            return Err(Error::contract("burn-in must be shorter than the window"));
        }
        if !(self.kappa > 0.0) || self.batch_size == 0 || !(self.adam.learning_rate > 0.0) {
            return Err(Error::contract("training needs kappa > 0, batch_size > 0 and a positive rate"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::contract("validation fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean batch loss before each update.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Correlation averaged over validation windows and channels.
    pub val_rho: Option<f64>,
}

/// Result of a run; `model` is the last parameter set with finite loss.
#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub adam: Adam,
    pub history: Vec<EpochStats>,
    /// Why training stopped early, if it did.
    pub stopped: Option<String>,
}

/// Loss and correlation of `model` on a dataset.
pub fn evaluate_dataset<F: Real, M: Trainable<F>>(
    model: &M,
    data: &ScaledDataset<F>,
    objective: Objective,
    loss: &LossConfig,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::contract("evaluation on an empty dataset"));
    }
    let preds: Vec<Matrix<F>> = data
        .windows
        .par_iter()
        .map(|w| model.predict(&w.x))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for (p, w) in preds.iter().zip(&data.windows) {
        total += objective_grad(objective, p, &w.y, loss)?.0;
    }
    let targets: Vec<Matrix<F>> = data.windows.iter().map(|w| w.y.clone()).collect();
    let rho = pearson_batch(&preds, &targets)?;
    Ok((total / data.len() as f64, rho))
}

pub struct Trainer<F: Real, M: Trainable<F>> {
    pub model: M,
    pub adam: Adam,
    pub config: TrainConfig,
    pub objective: Objective,
    pub history: Vec<EpochStats>,
    _scalar: PhantomData<F>,
}

impl<F: Real, M: Trainable<F>> Trainer<F, M> {
    pub fn new(model: M, config: TrainConfig, objective: Objective) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(model.param_count(), config.adam.clone());
        Ok(Self {
            model,
            adam,
            config,
            objective,
            history: Vec::new(),
            _scalar: PhantomData,
        })
    }

    /// Continue from saved optimizer state and history.
    pub fn resume(model: M, adam: Adam, history: Vec<EpochStats>, config: TrainConfig, objective: Objective) -> Result<Self> {
        config.validate()?;
        if adam.m.len() != model.param_count() {
            return Err(Error::contract("optimizer state does not match the model"));
        }
        Ok(Self {
            model,
            adam,
            config,
            objective,
            history,
            _scalar: PhantomData,
        })
    }

    fn grad_config(&self) -> GradConfig {
        GradConfig {
            objective: self.objective,
            loss: self.config.loss.clone(),
            kappa: self.config.kappa,
        }
    }

    /// Mean loss and gradient over a batch; the reduction runs in batch order.
    fn batch_gradient(&self, data: &ScaledDataset<F>, batch: &[usize]) -> Result<(f64, Vec<F>)> {
        let cfg = self.grad_config();
        let parts: Vec<(f64, Vec<F>)> = batch
            .par_iter()
            .map(|&i| {
                let w = &data.windows[i];
                self.model.value_and_grad(&w.x, &w.y, &cfg)
            })
            .collect::<Result<_>>()?;
        let n = parts.len() as f64;
        let mut sum = vec![0.0f64; self.model.param_count()];
        let mut loss = 0.0;
        for (l, g) in &parts {
            loss += l;
            for (s, v) in sum.iter_mut().zip(g) {
                *s += v.as_f64();
            }
        }
        let mut factor = 1.0 / n;
        if let Some(max) = self.config.clip_norm {
            let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt() / n;
            if norm > max {
                factor *= max / norm;
            }
        }
        Ok((loss / n, sum.into_iter().map(|v| F::lit(v * factor)).collect()))
    }

    /// One pass over the shuffled training windows.
    pub fn run_epoch(&mut self, train: &ScaledDataset<F>, val: Option<&ScaledDataset<F>>) -> Result<EpochStats> {
        if train.is_empty() {
            return Err(Error::contract("training set has no windows"));
        }
        let epoch = self.history.len();
        let order = shuffled_order(train.len(), self.config.seed, epoch);
        let leaks = self.model.leak_ranges();
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(self.config.batch_size) {
            let (loss, grad) = self.batch_gradient(train, batch).map_err(|e| match e {
                Error::NonFinite(what) => Error::Diverged {
                    epoch,
                    reason: format!("non-finite {what}"),
                },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    reason: format!("batch loss {loss}"),
                });
            }
            let mut params = self.model.params();
            self.adam.update(&mut params, &grad, &leaks).map_err(|e| Error::Diverged {
                epoch,
                reason: e.to_string(),
            })?;
            self.model.set_params(&params)?;
            total += loss;
            batches += 1;
        }
        let (val_loss, val_rho) = match val {
            Some(v) if !v.is_empty() => {
                let (l, r) = evaluate_dataset(&self.model, v, self.objective, &self.config.loss)?;
                (Some(l), Some(r))
            }
            _ => (None, None),
        };
        let stats = EpochStats {
            epoch,
            train_loss: total / batches as f64,
            val_loss,
            val_rho,
        };
        self.history.push(stats);
        Ok(stats)
    }

    /// Run the remaining epochs. Divergence stops the run and keeps the
    /// parameters of the last completed epoch.
    pub fn fit(
        mut self,
        train: &ScaledDataset<F>,
        val: Option<&ScaledDataset<F>>,
        mut on_epoch: impl FnMut(&EpochStats, &M, &Adam),
    ) -> Result<TrainOutcome<M>> {
        let mut stopped = None;
        while self.history.len() < self.config.epochs {
            let good = (self.model.clone(), self.adam.clone());
            match self.run_epoch(train, val) {
                Ok(stats) => on_epoch(&stats, &self.model, &self.adam),
                Err(Error::Diverged { epoch, reason }) => {
                    log::error!("training diverged in epoch {epoch}: {reason}");
                    self.model = good.0;
                    self.adam = good.1;
                    stopped = Some(format!("diverged in epoch {epoch}: {reason}"));
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(TrainOutcome {
            model: self.model,
            adam: self.adam,
            history: self.history,
            stopped,
        })
    }
}

/// Train `model` for `config.epochs` epochs.
pub fn train<F: Real, M: Trainable<F>>(
    model: M,
    train_set: &ScaledDataset<F>,
    val_set: Option<&ScaledDataset<F>>,
    config: &TrainConfig,
    objective: Objective,
) -> Result<TrainOutcome<M>> {
    Trainer::new(model, config.clone(), objective)?.fit(train_set, val_set, |_, _, _| {})
}

/// Training log as CSV: `epoch,train_loss,val_loss,val_rho`.
pub fn write_history_csv<W: Write>(history: &[EpochStats], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Format(format!("writing training log: {e}"));
    csv.write_record(["epoch", "train_loss", "val_loss", "val_rho"]).map_err(err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for s in history {
        csv.write_record([s.epoch.to_string(), s.train_loss.to_string(), opt(s.val_loss), opt(s.val_rho)])
            .map_err(err)?;
    }
    csv.flush().map_err(|e| Error::Format(format!("writing training log: {e}")))?;
    Ok(())
}
