//! Central pattern generator, left/right offset mixing and the servo map.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Sinusoidal wing-stroke oscillator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CpgParams {
    /// Stroke amplitude (deg).
    pub amplitude: f64,
    /// Flapping frequency (Hz).
    pub frequency: f64,
    /// Oscillator phase (rad).
    pub phase: f64,
}

impl Default for CpgParams {
    fn default() -> Self {
        Self {
            amplitude: 30.0,
            frequency: 3.25,
            phase: 0.0,
        }
    }
}

impl CpgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite())
            || !(self.frequency > 0.0 && self.frequency.is_finite())
            || !self.phase.is_finite()
        {
            return Err(Error::contract(format!(
                "oscillator needs A > 0 and f > 0, got A={}, f={}",
                self.amplitude, self.frequency
            )));
        }
        Ok(())
    }
}

/// Stroke angle `zeta = A sin(2 pi f t + phi) + o` (deg).
pub fn cpg_step(params: &CpgParams, t: f64, offset: f64) -> f64 {
    params.amplitude * (2.0 * PI * params.frequency * t + params.phase).sin() + offset
}

/// Superpose the symmetric (pitch) and antisymmetric (yaw) offsets into
/// per-wing offsets `(o_L, o_R)`.
pub fn offsets_to_wing_commands(o_theta: f64, o_psi: f64) -> (f64, f64) {
    (o_theta + o_psi, o_theta - o_psi)
}

/// Affine stroke-angle to pulse-width map with saturation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServoMap {
    /// Pulse at zero stroke angle (µs).
    pub center: f64,
    /// µs per degree.
    pub gain: f64,
    pub min_pulse: f64,
    pub max_pulse: f64,
}

impl Default for ServoMap {
    fn default() -> Self {
        Self {
            center: 1500.0,
            gain: 500.0 / 60.0,
            min_pulse: 1000.0,
            max_pulse: 2000.0,
        }
    }
}

impl ServoMap {
    pub fn pulse(&self, zeta: f64) -> f64 {
        (self.center + self.gain * zeta).clamp(self.min_pulse, self.max_pulse)
    }
}

/// [`ServoMap::pulse`] with the default 1500 µs ± 500 µs over ±60° map.
pub fn angle_to_pwm(zeta: f64) -> f64 {
    ServoMap::default().pulse(zeta)
}
