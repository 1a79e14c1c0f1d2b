//! Synthetic reference profiles, true attitude trajectories and IMU samples.
//!
//! Scenario kinds: holds, smoothed steps, slow sweeps, saturation episodes
//! (references beyond the attitude limit) and transient disturbances with
//! recovery. The true attitude follows its reference through a first-order
//! lag with piecewise random offsets, and the flapping wings add a body
//! undulation on pitch and roll that is phase-locked to the oscillator.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::signal::wrap_angle;

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.81;

/// One six-axis IMU reading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    /// Seconds since the start of the log.
    pub t: f64,
    /// Body rates (rad/s).
    pub gyro: [f64; 3],
    /// Specific force (m/s²).
    pub accel: [f64; 3],
}

/// Sampled true attitude and pilot references, all angles in degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub roll: Vec<f64>,
    pub pitch: Vec<f64>,
    /// Wrapped to `[-180, 180)`.
    pub yaw: Vec<f64>,
    pub theta_ref: Vec<f64>,
    /// Wrapped to `[-180, 180)`.
    pub psi_ref: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.pitch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pitch.is_empty()
    }
}

/// Knobs of the synthetic flight generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Log length (s).
    pub duration: f64,
    pub dt: f64,
    /// Stationary, level, non-flapping lead-in used for gyro calibration (s).
    pub lead_in: f64,
    /// Undulation frequency, equal to the oscillator frequency (Hz).
    pub frequency: f64,
    /// Oscillator phase the undulation is locked to (rad).
    pub phase: f64,
    /// Pitch undulation amplitude (deg).
    pub pitch_undulation: f64,
    /// Roll undulation amplitude (deg).
    pub roll_undulation: f64,
    /// Phase of the pitch undulation relative to the oscillator (rad).
    pub pitch_undulation_lag: f64,
    /// Phase of the roll undulation relative to the oscillator (rad).
    pub roll_undulation_lag: f64,
    /// Range of ordinary pitch references (± deg).
    pub pitch_ref_range: f64,
    /// Pitch reference during saturation episodes (± deg).
    pub saturation_ref: f64,
    /// Largest pitch the body reaches (± deg).
    pub pitch_limit: f64,
    /// Largest random tracking offset per segment (± deg).
    pub pitch_offset: f64,
    /// Largest disturbance pulse (± deg).
    pub disturbance: f64,
    /// Segment length range (s).
    pub segment: (f64, f64),
    /// Pitch tracking lag range (s).
    pub pitch_lag: (f64, f64),
    /// Largest commanded heading change (± deg).
    pub yaw_turn: f64,
    /// Largest heading sweep rate (± deg/s).
    pub yaw_sweep_rate: f64,
    /// Yaw tracking lag range (s).
    pub yaw_lag: (f64, f64),
    /// Largest slow roll excursion (± deg).
    pub roll_wander: f64,
    /// Duration of smoothed reference transitions (s).
    pub transition: f64,
    pub noise: ImuNoise,
}

/// Sensor imperfections.
#[derive(Clone, Debug, PartialEq)]
pub struct ImuNoise {
    /// White gyro noise (rad/s).
    pub gyro_std: f64,
    /// White accelerometer noise (m/s²).
    pub accel_std: f64,
    /// Per-axis constant gyro bias drawn uniformly within ± this (rad/s).
    pub gyro_bias_max: f64,
}

impl ImuNoise {
    pub fn none() -> Self {
        Self {
            gyro_std: 0.0,
            accel_std: 0.0,
            gyro_bias_max: 0.0,
        }
    }
}

impl Default for ImuNoise {
    fn default() -> Self {
        Self {
            gyro_std: 0.005,
            accel_std: 0.05,
            gyro_bias_max: 0.02,
        }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration: 60.0,
            dt: 0.01,
            lead_in: 2.0,
            frequency: 3.25,
            phase: 0.0,
            pitch_undulation: 4.0,
            roll_undulation: 1.5,
            pitch_undulation_lag: -0.6,
            roll_undulation_lag: 1.1,
            pitch_ref_range: 20.0,
            saturation_ref: 35.0,
            pitch_limit: 25.0,
            pitch_offset: 0.0,
            disturbance: 15.0,
            segment: (3.0, 8.0),
            pitch_lag: (0.15, 0.6),
            yaw_turn: 90.0,
            yaw_sweep_rate: 25.0,
            yaw_lag: (0.3, 1.0),
            roll_wander: 5.0,
            transition: 0.4,
            noise: ImuNoise::default(),
        }
    }
}

impl SynthConfig {
    /// No references, offsets, disturbances, roll wander, undulation or noise.
    pub fn quiet() -> Self {
        Self {
            pitch_undulation: 0.0,
            roll_undulation: 0.0,
            pitch_ref_range: 0.0,
            saturation_ref: 0.0,
            pitch_offset: 0.0,
            disturbance: 0.0,
            yaw_turn: 0.0,
            yaw_sweep_rate: 0.0,
            roll_wander: 0.0,
            noise: ImuNoise::none(),
            ..Self::default()
        }
    }

    pub fn samples(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.duration >= 2.0 * self.dt
            && self.lead_in >= 0.0
            && self.frequency > 0.0
            && self.segment.0 > 0.0
            && self.segment.0 <= self.segment.1
            && self.pitch_lag.0 > 0.0
            && self.pitch_lag.0 <= self.pitch_lag.1
            && self.yaw_lag.0 > 0.0
            && self.yaw_lag.0 <= self.yaw_lag.1
            && self.transition > 0.0;
        if !ok {
            return Err(Error::contract("inconsistent synthetic flight configuration"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum PitchSegment {
    Hold,
    Step,
    Sweep,
    Saturation,
    Recovery,
}

fn pick_pitch_segment(rng: &mut ChaCha8Rng) -> PitchSegment {
    match rng.random_range(0..20) {
        0..=5 => PitchSegment::Hold,
        6..=10 => PitchSegment::Step,
        11..=14 => PitchSegment::Sweep,
        15..=16 => PitchSegment::Saturation,
        _ => PitchSegment::Recovery,
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn symmetric(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    uniform(rng, (-r, r))
}

/// Raised-cosine blend from 0 to 1 over `s` in `[0, 1]`.
fn blend(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    0.5 * (1.0 - (PI * s).cos())
}

/// Generate references and the true attitude for one log.
pub fn synth_trajectory(cfg: &SynthConfig, seed: u64) -> Result<Trajectory> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.samples();
    let dt = cfg.dt;
    let lead = ((cfg.lead_in / dt).round() as usize).min(n);
    let seg_len = |rng: &mut ChaCha8Rng| ((uniform(rng, cfg.segment) / dt).round() as usize).max(1);
    let ramp = ((cfg.transition / dt).round() as usize).max(1);

    // Pitch reference and plant input extras.
    let mut theta_ref = vec![0.0; n];
    let mut plant_extra = vec![0.0; n];
    let mut pitch_tau = vec![cfg.pitch_lag.0; n];
    let mut level = 0.0;
    let mut k = lead;
    while k < n {
        let len = seg_len(&mut rng).min(n - k);
        let offset = symmetric(&mut rng, cfg.pitch_offset);
        let tau = uniform(&mut rng, cfg.pitch_lag);
        let start = level;
        match pick_pitch_segment(&mut rng) {
            PitchSegment::Hold => {
                for j in 0..len {
                    theta_ref[k + j] = start;
                }
            }
            PitchSegment::Step => {
                let target = symmetric(&mut rng, cfg.pitch_ref_range);
                for j in 0..len {
                    theta_ref[k + j] = start + (target - start) * blend(j as f64 / ramp as f64);
                }
                level = target;
            }
            PitchSegment::Sweep => {
                let amp = uniform(&mut rng, (0.25, 0.75)) * cfg.pitch_ref_range;
                let freq = uniform(&mut rng, (0.05, 0.3));
                let lim = cfg.pitch_ref_range;
                for j in 0..len {
                    let t = j as f64 * dt;
                    theta_ref[k + j] = (start + amp * (2.0 * PI * freq * t).sin()).clamp(-lim, lim);
                }
                level = theta_ref[k + len - 1];
            }
            PitchSegment::Saturation => {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let peak = sign * cfg.saturation_ref;
                for j in 0..len {
                    let up = blend(j as f64 / ramp as f64);
                    let down = blend((j + ramp) as f64 / ramp as f64 - len as f64 / ramp as f64);
                    theta_ref[k + j] = start + (peak - start) * (up - down).max(0.0);
                }
            }
            PitchSegment::Recovery => {
                let magnitude = symmetric(&mut rng, cfg.disturbance);
                let width = ((uniform(&mut rng, (0.2, 0.5)) / dt).round() as usize).max(1);
                let at = rng.random_range(0..len.max(1));
                for j in 0..len {
                    theta_ref[k + j] = start;
                    if j >= at && j < at + width {
                        plant_extra[k + j] += magnitude;
                    }
                }
            }
        }
        for j in 0..len {
            plant_extra[k + j] += offset;
            pitch_tau[k + j] = tau;
        }
        k += len;
    }

    // Heading reference, unwrapped.
    let mut psi_ref_u = vec![0.0; n];
    let mut yaw_tau = vec![cfg.yaw_lag.0; n];
    let mut heading = 0.0;
    let mut k = lead;
    while k < n {
        let len = seg_len(&mut rng).min(n - k);
        let tau = uniform(&mut rng, cfg.yaw_lag);
        let start = heading;
        match rng.random_range(0..3) {
            0 => {
                for j in 0..len {
                    psi_ref_u[k + j] = start;
                }
            }
            1 => {
                let turn = symmetric(&mut rng, cfg.yaw_turn);
                for j in 0..len {
                    psi_ref_u[k + j] = start + turn * blend(j as f64 / ramp as f64);
                }
                heading = start + turn;
            }
            _ => {
                let rate = symmetric(&mut rng, cfg.yaw_sweep_rate);
                // Ease in and out so the heading rate stays continuous.
                let mut acc = start;
                for j in 0..len {
                    let edge = blend(j as f64 / ramp as f64) * blend((len - j) as f64 / ramp as f64);
                    acc += rate * edge * dt;
                    psi_ref_u[k + j] = acc;
                }
                heading = acc;
            }
        }
        for j in 0..len {
            yaw_tau[k + j] = tau;
        }
        k += len;
    }

    // Slow roll wander targets.
    let mut roll_target = vec![0.0; n];
    let mut k = lead;
    while k < n {
        let len = seg_len(&mut rng).min(n - k);
        let v = symmetric(&mut rng, cfg.roll_wander);
        for j in 0..len {
            roll_target[k + j] = v;
        }
        k += len;
    }

    let omega = 2.0 * PI * cfg.frequency;
    let mut pitch = vec![0.0; n];
    let mut roll = vec![0.0; n];
    let mut yaw = vec![0.0; n];
    let mut psi_ref = vec![0.0; n];
    let (mut p_base, mut r_base, mut y_base) = (0.0, 0.0, 0.0);
    let lim = cfg.pitch_limit;
    for k in 0..n {
        let target = (theta_ref[k] + plant_extra[k]).clamp(-lim, lim);
        p_base += dt / pitch_tau[k].max(dt) * (target - p_base);
        r_base += dt / 0.5 * (roll_target[k] - r_base);
        y_base += dt / yaw_tau[k].max(dt) * (psi_ref_u[k] - y_base);
        let t = k as f64 * dt;
        let gate = if k < lead {
            0.0
        } else {
            blend((t - cfg.lead_in) / 0.5)
        };
        let phase = omega * t + cfg.phase;
        pitch[k] = p_base + gate * cfg.pitch_undulation * (phase + cfg.pitch_undulation_lag).sin();
        roll[k] = r_base + gate * cfg.roll_undulation * (phase + cfg.roll_undulation_lag).sin();
        yaw[k] = wrap_angle(y_base);
        psi_ref[k] = wrap_angle(psi_ref_u[k]);
    }

    Ok(Trajectory {
        dt,
        roll,
        pitch,
        yaw,
        theta_ref,
        psi_ref,
    })
}

/// Body rates (rad/s) from Euler angles and Euler rates (rad, rad/s).
pub fn euler_rates_to_body(roll: f64, pitch: f64, d_roll: f64, d_pitch: f64, d_yaw: f64) -> [f64; 3] {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    [
        d_roll - d_yaw * sp,
        d_pitch * cr + d_yaw * cp * sr,
        -d_pitch * sr + d_yaw * cp * cr,
    ]
}

/// Euler yaw rate (rad/s) from body rates and roll/pitch (rad).
pub fn body_to_yaw_rate(gyro: [f64; 3], roll: f64, pitch: f64) -> f64 {
    let (sr, cr) = roll.sin_cos();
    (gyro[1] * sr + gyro[2] * cr) / pitch.cos()
}

/// Specific force (m/s²) seen by a non-accelerating body at the given roll/pitch (rad).
pub fn gravity_in_body(roll: f64, pitch: f64) -> [f64; 3] {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    [-GRAVITY * sp, GRAVITY * sr * cp, GRAVITY * cr * cp]
}

fn central_difference(x: &[f64], k: usize, dt: f64, wrap: bool) -> f64 {
    let n = x.len();
    let d = |a: f64, b: f64| if wrap { wrap_angle(b - a) } else { b - a };
    if n < 2 {
        0.0
    } else if k == 0 {
        d(x[0], x[1]) / dt
    } else if k == n - 1 {
        d(x[n - 2], x[n - 1]) / dt
    } else {
        d(x[k - 1], x[k + 1]) / (2.0 * dt)
    }
}

/// IMU samples for a trajectory; `bias` is added to every gyro reading.
pub fn synth_imu<R: Rng>(traj: &Trajectory, noise: &ImuNoise, bias: [f64; 3], rng: &mut R) -> Vec<ImuSample> {
    let g_noise = Normal::new(0.0, noise.gyro_std.max(0.0)).expect("finite noise");
    let a_noise = Normal::new(0.0, noise.accel_std.max(0.0)).expect("finite noise");
    let dt = traj.dt;
    (0..traj.len())
        .map(|k| {
            let roll = traj.roll[k].to_radians();
            let pitch = traj.pitch[k].to_radians();
            let d_roll = central_difference(&traj.roll, k, dt, false).to_radians();
            let d_pitch = central_difference(&traj.pitch, k, dt, false).to_radians();
            let d_yaw = central_difference(&traj.yaw, k, dt, true).to_radians();
            let mut gyro = euler_rates_to_body(roll, pitch, d_roll, d_pitch, d_yaw);
            let mut accel = gravity_in_body(roll, pitch);
            for (g, b) in gyro.iter_mut().zip(bias) {
                *g += b;
                if noise.gyro_std > 0.0 {
                    *g += g_noise.sample(rng);
                }
            }
            if noise.accel_std > 0.0 {
                for a in accel.iter_mut() {
                    *a += a_noise.sample(rng);
                }
            }
            ImuSample {
                t: k as f64 * dt,
                gyro,
                accel,
            }
        })
        .collect()
}

/// Draw a per-axis constant gyro bias.
pub fn draw_gyro_bias<R: Rng>(noise: &ImuNoise, rng: &mut R) -> [f64; 3] {
    let m = noise.gyro_bias_max;
    if m > 0.0 {
        [0; 3].map(|_| rng.random_range(-m..m))
    } else {
        [0.0; 3]
    }
}
