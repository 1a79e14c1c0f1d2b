//! Expert replay: bias removal, attitude filter, pitch smoother, PID,
//! wing mixing, oscillator and servo map.

use crate::error::{check_len, Error, Result};

use super::cpg::{cpg_step, offsets_to_wing_commands, CpgParams, ServoMap};
use super::madgwick::Madgwick;
use super::pid::{pid_terms, PidGains, PidState, PidTerms};
use super::signal::{gyro_bias_calibrate, wrap_angle, yaw_rate_target, RlsFilter, YawIntegrator};
use super::synth::{body_to_yaw_rate, ImuSample};

/// Everything the expert pipeline depends on besides its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertConfig {
    pub dt: f64,
    pub madgwick_beta: f64,
    pub rls_lambda: f64,
    pub pitch_gains: PidGains,
    pub yaw_gains: PidGains,
    /// Offset and anti-windup bound (± deg).
    pub offset_limit: f64,
    pub cpg: CpgParams,
    pub servo: ServoMap,
    /// Leading stationary samples used for gyro-bias calibration.
    pub calibration_samples: usize,
    /// Time the wings start flapping (s); the oscillator amplitude is zero before.
    pub flight_start: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            madgwick_beta: 0.1,
            rls_lambda: 0.95,
            pitch_gains: PidGains::PITCH,
            yaw_gains: PidGains::YAW,
            offset_limit: 15.0,
            cpg: CpgParams::default(),
            servo: ServoMap::default(),
            calibration_samples: 200,
            flight_start: 2.0,
        }
    }
}

impl ExpertConfig {
    /// Flat `key: value` form used by log headers.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dt", self.dt.to_string()),
            ("madgwick_beta", self.madgwick_beta.to_string()),
            ("rls_lambda", self.rls_lambda.to_string()),
            ("pitch_kp", self.pitch_gains.kp.to_string()),
            ("pitch_ki", self.pitch_gains.ki.to_string()),
            ("pitch_kd", self.pitch_gains.kd.to_string()),
            ("yaw_kp", self.yaw_gains.kp.to_string()),
            ("yaw_ki", self.yaw_gains.ki.to_string()),
            ("yaw_kd", self.yaw_gains.kd.to_string()),
            ("offset_limit", self.offset_limit.to_string()),
            ("cpg_amplitude", self.cpg.amplitude.to_string()),
            ("cpg_frequency", self.cpg.frequency.to_string()),
            ("cpg_phase", self.cpg.phase.to_string()),
            ("servo_center", self.servo.center.to_string()),
            ("servo_gain", self.servo.gain.to_string()),
            ("servo_min", self.servo.min_pulse.to_string()),
            ("servo_max", self.servo.max_pulse.to_string()),
            ("calibration_samples", self.calibration_samples.to_string()),
            ("flight_start", self.flight_start.to_string()),
        ]
    }

    /// Inverse of [`ExpertConfig::to_pairs`]; every key is required.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let num = |k: &str| -> Result<f64> {
            let v = get(k).ok_or_else(|| Error::Format(format!("missing expert key {k:?}")))?;
            v.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad value for {k:?}: {v:?}")))
        };
        let cfg = Self {
            dt: num("dt")?,
            madgwick_beta: num("madgwick_beta")?,
            rls_lambda: num("rls_lambda")?,
            pitch_gains: PidGains {
                kp: num("pitch_kp")?,
                ki: num("pitch_ki")?,
                kd: num("pitch_kd")?,
            },
            yaw_gains: PidGains {
                kp: num("yaw_kp")?,
                ki: num("yaw_ki")?,
                kd: num("yaw_kd")?,
            },
            offset_limit: num("offset_limit")?,
            cpg: CpgParams {
                amplitude: num("cpg_amplitude")?,
                frequency: num("cpg_frequency")?,
                phase: num("cpg_phase")?,
            },
            servo: ServoMap {
                center: num("servo_center")?,
                gain: num("servo_gain")?,
                min_pulse: num("servo_min")?,
                max_pulse: num("servo_max")?,
            },
            calibration_samples: num("calibration_samples")? as usize,
            flight_start: num("flight_start")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.cpg.validate()?;
        if !(self.dt > 0.0) || !(self.offset_limit > 0.0) || self.calibration_samples < 100 {
            return Err(Error::contract(
                "expert needs dt > 0, a positive offset limit and at least 100 calibration samples",
            ));
        }
        Ok(())
    }
}

/// One 100 Hz sample of a demonstration log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlightRecord {
    pub imu: ImuSample,
    /// Pitch reference (deg).
    pub theta_ref: f64,
    /// Heading reference (deg).
    pub psi_ref: f64,
    pub roll: f64,
    pub pitch: f64,
    pub pitch_filtered: f64,
    /// Reconstructed heading (deg).
    pub yaw: f64,
    /// Heading rate target (deg/s).
    pub yaw_rate: f64,
    pub o_theta: f64,
    pub o_psi: f64,
    pub pwm_l: f64,
    pub pwm_r: f64,
}

/// Per-tick intermediate values that are not stored in a [`FlightRecord`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertTrace {
    pub gyro_bias: [f64; 3],
    pub pitch_terms: Vec<PidTerms>,
    pub yaw_terms: Vec<PidTerms>,
}

/// Oscillator amplitude gate: the wings are still before `flight_start`.
pub fn flapping(cfg: &ExpertConfig, t: f64) -> bool {
    t >= cfg.flight_start
}

/// Stroke angles `(left, right)` for the given per-wing offsets.
pub fn stroke_angles(cfg: &ExpertConfig, t: f64, o_l: f64, o_r: f64) -> (f64, f64) {
    let cpg = if flapping(cfg, t) {
        cfg.cpg
    } else {
        CpgParams {
            amplitude: 0.0,
            ..cfg.cpg
        }
    };
    (cpg_step(&cpg, t, o_l), cpg_step(&cpg, t, o_r))
}

/// Pulse widths `(left, right)` for symmetric and antisymmetric offsets.
pub fn offsets_to_pwm(cfg: &ExpertConfig, t: f64, o_theta: f64, o_psi: f64) -> (f64, f64) {
    let (o_l, o_r) = offsets_to_wing_commands(o_theta, o_psi);
    let (z_l, z_r) = stroke_angles(cfg, t, o_l, o_r);
    (cfg.servo.pulse(z_l), cfg.servo.pulse(z_r))
}

/// Replay the expert over raw IMU samples and references.
pub fn generate_expert_labels(
    imu: &[ImuSample],
    theta_ref: &[f64],
    psi_ref: &[f64],
    cfg: &ExpertConfig,
) -> Result<Vec<FlightRecord>> {
    Ok(generate_expert_trace(imu, theta_ref, psi_ref, cfg)?.0)
}

/// [`generate_expert_labels`] plus the PID term breakdown.
pub fn generate_expert_trace(
    imu: &[ImuSample],
    theta_ref: &[f64],
    psi_ref: &[f64],
    cfg: &ExpertConfig,
) -> Result<(Vec<FlightRecord>, ExpertTrace)> {
    cfg.validate()?;
    check_len("expert pitch references", imu.len(), theta_ref.len())?;
    check_len("expert heading references", imu.len(), psi_ref.len())?;
    if imu.len() < cfg.calibration_samples.max(2) {
        return Err(Error::contract(format!(
            "log of {} samples is shorter than the {}-sample calibration segment",
            imu.len(),
            cfg.calibration_samples
        )));
    }
    let gyro: Vec<[f64; 3]> = imu[..cfg.calibration_samples].iter().map(|s| s.gyro).collect();
    let bias = gyro_bias_calibrate(&gyro)?;

    let n = imu.len();
    let dt = cfg.dt;
    let mut filter = Madgwick::new(cfg.madgwick_beta);
    let mut yaw_int = YawIntegrator::new(0.0);
    let mut rls = RlsFilter::new(cfg.rls_lambda)?;
    let mut roll = Vec::with_capacity(n);
    let mut pitch = Vec::with_capacity(n);
    let mut pitch_f = Vec::with_capacity(n);
    let mut yaw = Vec::with_capacity(n);
    for s in imu {
        let g = [0, 1, 2].map(|i| s.gyro[i] - bias[i]);
        filter.update(g, s.accel, dt);
        let (r, p) = filter.roll_pitch_deg();
        let rate = body_to_yaw_rate(g, r.to_radians(), p.to_radians()).to_degrees();
        roll.push(r);
        pitch.push(p);
        pitch_f.push(rls.update(p));
        yaw.push(yaw_int.update(rate, dt));
    }
    let yaw_rate: Vec<f64> = yaw_rate_target(&yaw, dt * 1000.0)?
        .into_iter()
        .map(|r| r * 1000.0)
        .collect();

    let mut pitch_pid = PidState::default();
    let mut yaw_pid = PidState::default();
    let mut trace = ExpertTrace {
        gyro_bias: bias,
        pitch_terms: Vec::with_capacity(n),
        yaw_terms: Vec::with_capacity(n),
    };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let e_theta = theta_ref[k] - pitch_f[k];
        let e_psi = wrap_angle(psi_ref[k] - yaw[k]);
        let pt = pid_terms(&cfg.pitch_gains, &mut pitch_pid, e_theta, dt, cfg.offset_limit);
        let yt = pid_terms(&cfg.yaw_gains, &mut yaw_pid, e_psi, dt, cfg.offset_limit);
        let (pwm_l, pwm_r) = offsets_to_pwm(cfg, imu[k].t, pt.output, yt.output);
        out.push(FlightRecord {
            imu: imu[k],
            theta_ref: theta_ref[k],
            psi_ref: psi_ref[k],
            roll: roll[k],
            pitch: pitch[k],
            pitch_filtered: pitch_f[k],
            yaw: yaw[k],
            yaw_rate: yaw_rate[k],
            o_theta: pt.output,
            o_psi: yt.output,
            pwm_l,
            pwm_r,
        });
        trace.pitch_terms.push(pt);
        trace.yaw_terms.push(yt);
    }
    Ok((out, trace))
}
