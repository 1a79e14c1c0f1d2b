//! Offline replay of trained networks and of the expert on recorded logs.
//!
//! Subnetworks are evaluated open loop on whole logs from zero state, fed
//! the same features they were trained on. [`replay_cascade`] instead runs
//! the deployed estimator→controller chain, where the controller sees the
//! estimator's output and a heading integrated from the predicted yaw rate.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::expert::{generate_expert_labels, offsets_to_pwm, FlightLog, YawIntegrator};
use crate::matrix::Matrix;
use crate::snn::{ControllerVariant, Network, NetworkSpec, STATE_DIM};
use crate::train::dataset::{controller_refs, log_gyro_bias};
use crate::train::{pearson, role_features, Model, Role};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelMetrics {
    pub rmse: f64,
    /// Pearson correlation over time; 0 for a constant channel.
    pub rho: f64,
}

/// Per-channel RMSE and correlation of two equally shaped sequences.
pub fn channel_metrics(pred: &Matrix<f64>, target: &Matrix<f64>) -> Result<Vec<ChannelMetrics>> {
    check_len("prediction rows", target.rows(), pred.rows())?;
    check_len("prediction channels", target.cols(), pred.cols())?;
    let n = target.rows();
    if n < 2 {
        return Err(Error::contract("metrics need at least two samples"));
    }
    (0..target.cols())
        .map(|c| {
            let p: Vec<f64> = (0..n).map(|t| pred.get(t, c)).collect();
            let y: Vec<f64> = (0..n).map(|t| target.get(t, c)).collect();
            let se: f64 = p.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(ChannelMetrics {
                rmse: (se / n as f64).sqrt(),
                rho: pearson(&p, &y)?,
            })
        })
        .collect()
}

pub fn channel_names(role: Role) -> &'static [&'static str] {
    match role {
        Role::Estimator => &["roll", "pitch", "yaw_rate"],
        Role::Controller(ControllerVariant::PitchOffset) => &["o_theta"],
        Role::Controller(ControllerVariant::YawOffset) => &["o_psi"],
        Role::Controller(ControllerVariant::Pwm) => &["pwm_l", "pwm_r"],
    }
}

/// What produces the predictions being scored.
#[derive(Clone, Copy, Debug)]
pub enum Predictor<'a> {
    Model(&'a Model),
    /// The expert replayed from the log's IMU and references.
    Expert,
}

/// Predictions and targets of `role` over one whole log.
pub fn predict_log(p: Predictor<'_>, log: &FlightLog, role: Role) -> Result<(Matrix<f64>, Matrix<f64>)> {
    let features = role_features(std::slice::from_ref(log), role)?.remove(0);
    let pred = match p {
        Predictor::Model(m) => {
            check_len("model inputs", features.inputs.cols(), m.inputs())?;
            check_len("model outputs", features.targets.cols(), m.outputs())?;
            m.predict(&features.inputs)?
        }
        Predictor::Expert => {
            let records = generate_expert_labels(&log.imu(), &log.theta_ref(), &log.psi_ref(), &log.config)?;
            let replay = FlightLog {
                config: log.config.clone(),
                meta: Default::default(),
                records,
            };
            role_features(std::slice::from_ref(&replay), role)?.remove(0).targets
        }
    };
    Ok((pred, features.targets))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogEval {
    /// Index into the evaluated log list.
    pub log: usize,
    pub samples: usize,
    pub channels: Vec<ChannelMetrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub role: Role,
    pub logs: Vec<LogEval>,
}

impl EvalReport {
    /// RMSE pooled over every sample of every log, correlation averaged over logs.
    pub fn summary(&self) -> Vec<ChannelMetrics> {
        let channels = channel_names(self.role).len();
        let total: usize = self.logs.iter().map(|l| l.samples).sum();
        (0..channels)
            .map(|c| {
                let se: f64 = self
                    .logs
                    .iter()
                    .map(|l| l.samples as f64 * l.channels[c].rmse.powi(2))
                    .sum();
                let rho: f64 = self.logs.iter().map(|l| l.channels[c].rho).sum();
                ChannelMetrics {
                    rmse: (se / total.max(1) as f64).sqrt(),
                    rho: rho / self.logs.len().max(1) as f64,
                }
            })
            .collect()
    }

    /// One row per log and channel, then the pooled rows with `log = all`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["role", "log", "channel", "samples", "rmse", "rho"])?;
        let role = self.role.as_str();
        let names = channel_names(self.role);
        for l in &self.logs {
            for (name, m) in names.iter().zip(&l.channels) {
                out.write_record([
                    role,
                    &l.log.to_string(),
                    name,
                    &l.samples.to_string(),
                    &format!("{:.17e}", m.rmse),
                    &format!("{:.17e}", m.rho),
                ])?;
            }
        }
        let total: usize = self.logs.iter().map(|l| l.samples).sum();
        for (name, m) in names.iter().zip(self.summary()) {
            out.write_record([
                role,
                "all",
                name,
                &total.to_string(),
                &format!("{:.17e}", m.rmse),
                &format!("{:.17e}", m.rho),
            ])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Score `p` on `logs[range]`.
pub fn evaluate(p: Predictor<'_>, logs: &[FlightLog], range: Range<usize>, role: Role) -> Result<EvalReport> {
    let logs = range
        .into_par_iter()
        .map(|i| {
            let (pred, target) = predict_log(p, &logs[i], role)?;
            Ok(LogEval {
                log: i,
                samples: target.rows(),
                channels: channel_metrics(&pred, &target)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { role, logs })
}

/// Per-tick outputs of the deployed cascade.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeTrace {
    /// `T x 3`: roll, pitch, yaw rate.
    pub estimate: Matrix<f64>,
    /// Heading integrated from the estimated yaw rate (deg).
    pub yaw: Vec<f64>,
    pub control: Matrix<f64>,
}

/// Run the cascade over a log as it would run on board: gyro bias from the
/// calibration segment, estimator, trapezoidal heading, controller.
pub fn replay_cascade(spec: &NetworkSpec, log: &FlightLog) -> Result<CascadeTrace> {
    let mut net = Network::new(spec)?;
    let bias = log_gyro_bias(log)?;
    let dt = log.config.dt;
    let n = log.len();
    let k = spec.variant.outputs();
    let mut heading = YawIntegrator::new(0.0);
    let mut estimate = Vec::with_capacity(n * STATE_DIM);
    let mut control = Vec::with_capacity(n * k);
    let mut yaw = Vec::with_capacity(n);
    let mut imu = [0.0f32; 6];
    for r in &log.records {
        let g = [0, 1, 2].map(|i| r.imu.gyro[i] - bias[i]);
        for i in 0..3 {
            imu[i] = g[i] as f32;
            imu[i + 3] = r.imu.accel[i] as f32;
        }
        let est = net.estimate(&imu)?;
        estimate.extend(est.iter().map(|&v| v as f64));
        let psi = heading.update(est[2] as f64, dt);
        yaw.push(psi);
        let refs = controller_refs(r.theta_ref, r.psi_ref, psi, g).map(|v| v as f32);
        control.extend(net.control(&refs)?.iter().map(|&v| v as f64));
    }
    Ok(CascadeTrace {
        estimate: Matrix::from_vec(n, STATE_DIM, estimate)?,
        yaw,
        control: Matrix::from_vec(n, k, control)?,
    })
}

/// Errors of both controller families on logs flown at one oscillator
/// frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyProbe {
    pub frequency: f64,
    /// Pooled RMSE of the pitch-offset and yaw-offset controllers (deg).
    pub offset_rmse: [f64; 2],
    /// Pooled RMSE of the pulse widths obtained by driving the oscillator
    /// at the log's frequency with the predicted offsets (µs).
    pub aware_pwm_rmse: f64,
    /// Pooled RMSE of the directly predicted pulse widths (µs).
    pub agnostic_pwm_rmse: f64,
}

/// Score offset controllers and a PWM controller on `logs`, which must all
/// share one oscillator frequency.
pub fn frequency_probe(pitch: &Model, yaw: &Model, pwm: &Model, logs: &[FlightLog]) -> Result<FrequencyProbe> {
    let frequency = logs
        .first()
        .ok_or_else(|| Error::contract("frequency probe without logs"))?
        .config
        .cpg
        .frequency;
    if logs.iter().any(|l| l.config.cpg.frequency != frequency) {
        return Err(Error::contract("frequency probe logs differ in oscillator frequency"));
    }
    let per_log = logs
        .par_iter()
        .map(|log| {
            let (o_theta, t_theta) = predict_log(Predictor::Model(pitch), log, Role::Controller(ControllerVariant::PitchOffset))?;
            let (o_psi, t_psi) = predict_log(Predictor::Model(yaw), log, Role::Controller(ControllerVariant::YawOffset))?;
            let (dev, _) = predict_log(Predictor::Model(pwm), log, Role::Controller(ControllerVariant::Pwm))?;
            let center = log.config.servo.center;
            let mut se = [0.0f64; 4];
            for (k, r) in log.records.iter().enumerate() {
                se[0] += (o_theta.get(k, 0) - t_theta.get(k, 0)).powi(2);
                se[1] += (o_psi.get(k, 0) - t_psi.get(k, 0)).powi(2);
                let (l, rr) = offsets_to_pwm(&log.config, r.imu.t, o_theta.get(k, 0), o_psi.get(k, 0));
                se[2] += (l - r.pwm_l).powi(2) + (rr - r.pwm_r).powi(2);
                se[3] += (dev.get(k, 0) + center - r.pwm_l).powi(2) + (dev.get(k, 1) + center - r.pwm_r).powi(2);
            }
            Ok((log.len(), se))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut n = 0usize;
    let mut se = [0.0f64; 4];
    for (len, s) in per_log {
        n += len;
        for (a, b) in se.iter_mut().zip(s) {
            *a += b;
        }
    }
    let n = n as f64;
    Ok(FrequencyProbe {
        frequency,
        offset_rmse: [(se[0] / n).sqrt(), (se[1] / n).sqrt()],
        aware_pwm_rmse: (se[2] / (2.0 * n)).sqrt(),
        agnostic_pwm_rmse: (se[3] / (2.0 * n)).sqrt(),
    })
}
