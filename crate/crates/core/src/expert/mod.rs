//! The demonstration generator: oscillator, attitude filter, PID expert,
//! signal conditioning, synthetic flights and label replay.

pub mod cpg;
pub mod labels;
pub mod log;
pub mod madgwick;
pub mod pid;
pub mod signal;
pub mod synth;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;

pub use cpg::{angle_to_pwm, cpg_step, offsets_to_wing_commands, CpgParams, ServoMap};
pub use labels::{
    generate_expert_labels, generate_expert_trace, offsets_to_pwm, ExpertConfig, ExpertTrace,
    FlightRecord,
};
pub use log::{list_logs, load_logs, FlightLog};
pub use madgwick::{Madgwick, Quaternion};
pub use pid::{pid_step, pid_terms, PidGains, PidState, PidTerms};
pub use signal::{
    gyro_bias_calibrate, integrate_yaw, rls_filter_pitch, wrap_angle, yaw_rate_target, RlsFilter,
    YawIntegrator,
};
pub use synth::{synth_imu, synth_trajectory, ImuNoise, ImuSample, SynthConfig, Trajectory};

/// Synthesize one labelled log. The oscillator frequency and phase of the
/// expert follow the undulation settings of `synth`.
pub fn synth_flight(synth: &SynthConfig, expert: &ExpertConfig, seed: u64) -> Result<FlightLog> {
    let traj = synth_trajectory(synth, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let bias = synth::draw_gyro_bias(&synth.noise, &mut rng);
    let imu = synth_imu(&traj, &synth.noise, bias, &mut rng);
    let mut expert = expert.clone();
    expert.cpg.frequency = synth.frequency;
    expert.cpg.phase = synth.phase;
    expert.dt = synth.dt;
    expert.flight_start = synth.lead_in;
    let records = generate_expert_labels(&imu, &traj.theta_ref, &traj.psi_ref, &expert)?;
    let mut meta = BTreeMap::new();
    meta.insert("seed".to_string(), seed.to_string());
    meta.insert("frequency".to_string(), synth.frequency.to_string());
    Ok(FlightLog {
        config: expert,
        meta,
        records,
    })
}

/// Per-log seed derived from a dataset seed.
pub fn log_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

/// `count` logs generated in parallel, ordered by index.
pub fn synth_dataset(
    synth: &SynthConfig,
    expert: &ExpertConfig,
    seed: u64,
    count: usize,
) -> Result<Vec<FlightLog>> {
    (0..count)
        .into_par_iter()
        .map(|i| synth_flight(synth, expert, log_seed(seed, i)))
        .collect()
}
