//! Discrete PID with trapezoidal integral, backward-difference derivative,
//! anti-windup and output saturation.

/// Gains mapping degrees of error to degrees of stroke offset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl PidGains {
    pub const PITCH: PidGains = PidGains {
        kp: 0.6,
        ki: 0.55,
        kd: 0.05,
    };
    pub const YAW: PidGains = PidGains {
        kp: 0.15,
        ki: 0.0,
        kd: 0.0,
    };
}

/// Integrator and previous-error memory of one PID channel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

/// Individual contributions of one PID evaluation, before output clamping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidTerms {
    pub p: f64,
    pub i: f64,
    pub d: f64,
    /// Clamped sum of the three terms.
    pub output: f64,
}

/// One PID update; `limit` bounds both `|K_I * integral|` and the output.
///
/// The first call has no previous error: its integral slice assumes a
/// constant error over the step and its derivative is zero.
pub fn pid_terms(gains: &PidGains, state: &mut PidState, error: f64, dt: f64, limit: f64) -> PidTerms {
    debug_assert!(dt > 0.0);
    let prev = state.prev_error.unwrap_or(error);
    state.integral += 0.5 * dt * (prev + error);
    if gains.ki != 0.0 {
        let bound = limit / gains.ki.abs();
        state.integral = state.integral.clamp(-bound, bound);
    }
    let derivative = match state.prev_error {
        Some(p) => (error - p) / dt,
        None => 0.0,
    };
    state.prev_error = Some(error);
    let p = gains.kp * error;
    let i = gains.ki * state.integral;
    let d = gains.kd * derivative;
    PidTerms {
        p,
        i,
        d,
        output: (p + i + d).clamp(-limit, limit),
    }
}

/// Clamped PID output.
pub fn pid_step(gains: &PidGains, state: &mut PidState, error: f64, dt: f64, limit: f64) -> f64 {
    pid_terms(gains, state, error, dt, limit).output
}
