//! Angle wrapping, yaw differencing and integration, the pitch smoother and
//! gyro-bias calibration.

use crate::error::{Error, Result};

/// Map an angle in degrees to `[-180, 180)`.
pub fn wrap_angle(e: f64) -> f64 {
    if (-180.0..180.0).contains(&e) {
        return e;
    }
    let w = (e + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Backward-difference yaw rate in deg/ms; the wrapped difference is taken
/// before dividing and the first sample copies the second.
pub fn yaw_rate_target(psi: &[f64], dt_ms: f64) -> Result<Vec<f64>> {
    if psi.len() < 2 {
        return Err(Error::contract("yaw_rate_target needs at least two samples"));
    }
    if dt_ms <= 0.0 {
        return Err(Error::contract("yaw_rate_target needs dt_ms > 0"));
    }
    let mut out = Vec::with_capacity(psi.len());
    out.push(0.0);
    for w in psi.windows(2) {
        out.push(wrap_angle(w[1] - w[0]) / dt_ms);
    }
    out[0] = out[1];
    Ok(out)
}

/// One trapezoidal yaw update from rates in deg/s, wrapped.
pub fn integrate_yaw(prev: f64, rate_prev: f64, rate: f64, dt: f64) -> f64 {
    wrap_angle(prev + 0.5 * dt * (rate_prev + rate))
}

/// Streaming yaw reconstruction from a yaw-rate signal.
#[derive(Clone, Debug, PartialEq)]
pub struct YawIntegrator {
    yaw: f64,
    prev_rate: Option<f64>,
    initial_offset: f64,
}

impl YawIntegrator {
    /// `initial_offset` is the heading assigned to the first sample.
    pub fn new(initial_offset: f64) -> Self {
        Self {
            yaw: wrap_angle(initial_offset),
            prev_rate: None,
            initial_offset,
        }
    }

    /// Consume the rate (deg/s) of the current tick and return the yaw.
    pub fn update(&mut self, rate: f64, dt: f64) -> f64 {
        if let Some(prev) = self.prev_rate {
            self.yaw = integrate_yaw(self.yaw, prev, rate, dt);
        }
        self.prev_rate = Some(rate);
        self.yaw
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.initial_offset);
    }
}

/// Recursive least-squares fit of a local constant with exponential forgetting.
///
/// The gain sequence is `w <- lambda w + 1`, `c <- c + (y - c) / w`, which in
/// steady state is exponential smoothing with weight `1 - lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct RlsFilter {
    lambda: f64,
    weight: f64,
    estimate: f64,
}

impl RlsFilter {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::contract(format!(
                "forgetting factor must lie in (0, 1], got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            weight: 0.0,
            estimate: 0.0,
        })
    }

    pub fn update(&mut self, y: f64) -> f64 {
        self.weight = self.lambda * self.weight + 1.0;
        self.estimate += (y - self.estimate) / self.weight;
        self.estimate
    }
}

/// Causal RLS smoothing of a pitch sequence.
pub fn rls_filter_pitch(raw: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let mut f = RlsFilter::new(lambda)?;
    Ok(raw.iter().map(|&y| f.update(y)).collect())
}

/// Per-axis mean gyro reading over a stationary segment (rad/s).
pub fn gyro_bias_calibrate(gyro: &[[f64; 3]]) -> Result<[f64; 3]> {
    const MIN_SAMPLES: usize = 100;
    if gyro.len() < MIN_SAMPLES {
        return Err(Error::contract(format!(
            "gyro bias calibration needs at least {MIN_SAMPLES} samples, got {}",
            gyro.len()
        )));
    }
    // Summing deviations from the first sample keeps constant input exact.
    let first = gyro[0];
    let mut dev = [0.0; 3];
    for g in gyro {
        for i in 0..3 {
            dev[i] += g[i] - first[i];
        }
    }
    let n = gyro.len() as f64;
    Ok([0, 1, 2].map(|i| first[i] + dev[i] / n))
}
