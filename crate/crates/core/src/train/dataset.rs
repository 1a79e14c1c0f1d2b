//! Features, channel scales, windows and the train/validation split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::expert::{gyro_bias_calibrate, wrap_angle, FlightLog};
use crate::matrix::Matrix;
use crate::real::Real;
use crate::snn::{ControllerVariant, IMU_DIM, REF_DIM, STATE_DIM};

/// `x * c` elementwise.
pub fn scale(x: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    check_len("scale vector", x.len(), c.len())?;
    check_scales(c)?;
    Ok(x.iter().zip(c).map(|(a, b)| a * b).collect())
}

/// `y / c` elementwise.
pub fn unscale(y: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    check_len("scale vector", y.len(), c.len())?;
    check_scales(c)?;
    Ok(y.iter().zip(c).map(|(a, b)| a / b).collect())
}

fn check_scales(c: &[f64]) -> Result<()> {
    if let Some(i) = c.iter().position(|v| *v == 0.0 || !v.is_finite()) {
        return Err(Error::contract(format!("scale entry {i} is {}", c[i])));
    }
    Ok(())
}

/// Physical-unit inputs and targets of one log, rows are ticks.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub inputs: Matrix<f64>,
    pub targets: Matrix<f64>,
}

impl Features {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}

/// Gyro bias from the log's calibration segment.
pub fn log_gyro_bias(log: &FlightLog) -> Result<[f64; 3]> {
    let n = log.config.calibration_samples.min(log.len());
    let gyro: Vec<[f64; 3]> = log.records[..n].iter().map(|r| r.imu.gyro).collect();
    gyro_bias_calibrate(&gyro)
}

/// Estimator pairs: bias-corrected gyro and accelerometer to
/// `[roll, pitch, yaw_rate]`.
pub fn estimator_features(log: &FlightLog) -> Result<Features> {
    let bias = log_gyro_bias(log)?;
    let n = log.len();
    let mut x = Vec::with_capacity(n * IMU_DIM);
    let mut y = Vec::with_capacity(n * STATE_DIM);
    for r in &log.records {
        x.extend((0..3).map(|i| r.imu.gyro[i] - bias[i]));
        x.extend_from_slice(&r.imu.accel);
        y.extend_from_slice(&[r.roll, r.pitch, r.yaw_rate]);
    }
    Ok(Features {
        inputs: Matrix::from_vec(n, IMU_DIM, x)?,
        targets: Matrix::from_vec(n, STATE_DIM, y)?,
    })
}

/// Reference/measurement block of the controller input for one record.
pub fn controller_refs(theta_ref: f64, psi_ref: f64, yaw: f64, gyro: [f64; 3]) -> [f64; REF_DIM] {
    [theta_ref, wrap_angle(psi_ref - yaw), gyro[0], gyro[1], gyro[2]]
}

/// Controller pairs: `[refs; expert state]` to the variant's target. The
/// PWM variant's targets are pulse deviations from the servo center.
pub fn controller_features(log: &FlightLog, variant: ControllerVariant) -> Result<Features> {
    let bias = log_gyro_bias(log)?;
    let n = log.len();
    let d = REF_DIM + STATE_DIM;
    let o = variant.outputs();
    let center = log.config.servo.center;
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n * o);
    for r in &log.records {
        let g = [0, 1, 2].map(|i| r.imu.gyro[i] - bias[i]);
        x.extend_from_slice(&controller_refs(r.theta_ref, r.psi_ref, r.yaw, g));
        x.extend_from_slice(&[r.roll, r.pitch, r.yaw_rate]);
        match variant {
            ControllerVariant::PitchOffset => y.push(r.o_theta),
            ControllerVariant::YawOffset => y.push(r.o_psi),
            ControllerVariant::Pwm => y.extend_from_slice(&[r.pwm_l - center, r.pwm_r - center]),
        }
    }
    Ok(Features {
        inputs: Matrix::from_vec(n, d, x)?,
        targets: Matrix::from_vec(n, o, y)?,
    })
}

/// Per-channel `1 / RMS` over all rows; channels with zero RMS get 1.
pub fn rms_scales<'a>(mats: impl IntoIterator<Item = &'a Matrix<f64>>) -> Result<Vec<f64>> {
    let mut sums: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for m in mats {
        if sums.is_empty() {
            sums = vec![0.0; m.cols()];
        }
        check_len("scale channels", sums.len(), m.cols())?;
        for r in 0..m.rows() {
            for (s, v) in sums.iter_mut().zip(m.row(r)) {
                *s += v * v;
            }
        }
        rows += m.rows();
    }
    if rows == 0 {
        return Err(Error::contract("cannot derive scales from no data"));
    }
    Ok(sums
        .iter()
        .map(|s| {
            let rms = (s / rows as f64).sqrt();
            if rms > 0.0 {
                1.0 / rms
            } else {
                1.0
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowConfig {
    pub len: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            len: 2500,
            stride: 400,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.len == 0 || self.stride == 0 || self.stride > self.len {
            return Err(Error::contract("windows need 0 < stride <= len"));
        }
        Ok(())
    }
}

/// Start ticks of every full window in a log of `n` ticks.
pub fn window_starts(n: usize, cfg: &WindowConfig) -> Vec<usize> {
    if n < cfg.len {
        return Vec::new();
    }
    (0..=(n - cfg.len) / cfg.stride).map(|i| i * cfg.stride).collect()
}

/// One scaled training window.
#[derive(Clone, Debug, PartialEq)]
pub struct Window<F> {
    pub log: usize,
    pub start: usize,
    pub x: Matrix<F>,
    pub y: Matrix<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaledDataset<F = f32> {
    pub windows: Vec<Window<F>>,
    pub input_scale: Vec<f64>,
    pub output_scale: Vec<f64>,
}

impl<F> ScaledDataset<F> {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

fn scaled_rows<F: Real>(m: &Matrix<f64>, start: usize, len: usize, c: &[f64]) -> Result<Matrix<F>> {
    let w = m.cols();
    let mut out = Vec::with_capacity(len * w);
    for r in start..start + len {
        out.extend(m.row(r).iter().zip(c).map(|(v, s)| F::lit(v * s)));
    }
    Matrix::from_vec(len, w, out)
}

/// Cut every log into overlapping scaled windows; logs shorter than a
/// window are skipped with a warning.
pub fn window_dataset<F: Real>(
    logs: &[Features],
    cfg: &WindowConfig,
    input_scale: &[f64],
    output_scale: &[f64],
) -> Result<ScaledDataset<F>> {
    cfg.validate()?;
    check_scales(input_scale)?;
    check_scales(output_scale)?;
    let mut windows = Vec::new();
    for (i, f) in logs.iter().enumerate() {
        check_len("input scale", f.inputs.cols(), input_scale.len())?;
        check_len("output scale", f.targets.cols(), output_scale.len())?;
        check_len("target rows", f.inputs.rows(), f.targets.rows())?;
        let starts = window_starts(f.len(), cfg);
        if starts.is_empty() {
            log::warn!("log {i}: {} ticks is shorter than a {}-tick window; skipped", f.len(), cfg.len);
        }
        for s in starts {
            windows.push(Window {
                log: i,
                start: s,
                x: scaled_rows(&f.inputs, s, cfg.len, input_scale)?,
                y: scaled_rows(&f.targets, s, cfg.len, output_scale)?,
            });
        }
    }
    Ok(ScaledDataset {
        windows,
        input_scale: input_scale.to_vec(),
        output_scale: output_scale.to_vec(),
    })
}

/// Number of held-out logs: the last `fraction` of `n`, at least one when
/// `n > 1`.
pub fn validation_count(n: usize, fraction: f64) -> usize {
    if n < 2 {
        return 0;
    }
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Seeded permutation of window indices for one epoch.
pub fn shuffled_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    order.shuffle(&mut rng);
    order
}
