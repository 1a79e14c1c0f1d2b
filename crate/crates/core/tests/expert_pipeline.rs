use neuroflap::expert::{
    generate_expert_labels, generate_expert_trace, synth_flight, synth_imu, synth_trajectory,
    wrap_angle, ExpertConfig, FlightLog, ImuSample, Madgwick, Quaternion, SynthConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

fn short_config() -> SynthConfig {
    SynthConfig {
        duration: 20.0,
        ..SynthConfig::default()
    }
}

#[test]
fn replay_from_stored_log_is_bit_exact() {
    let log = synth_flight(&short_config(), &ExpertConfig::default(), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    log.save(&path).unwrap();
    let stored = FlightLog::load(&path).unwrap();
    assert_eq!(stored, log);

    let replay =
        generate_expert_labels(&stored.imu(), &stored.theta_ref(), &stored.psi_ref(), &stored.config)
            .unwrap();
    for (a, b) in replay.iter().zip(&stored.records) {
        assert_eq!(a.o_theta.to_bits(), b.o_theta.to_bits());
        assert_eq!(a.o_psi.to_bits(), b.o_psi.to_bits());
        assert_eq!(a.pwm_l.to_bits(), b.pwm_l.to_bits());
        assert_eq!(a.pwm_r.to_bits(), b.pwm_r.to_bits());
    }
}

#[test]
fn log_rejects_corruption() {
    let log = synth_flight(
        &SynthConfig {
            duration: 3.0,
            ..SynthConfig::default()
        },
        &ExpertConfig::default(),
        1,
    )
    .unwrap();
    let mut buf = Vec::new();
    log.write_to(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();

    let no_gain = text.replace("# pitch_kp: 0.6\n", "");
    assert!(FlightLog::read_from(no_gain.as_bytes()).is_err());
    let wrong_format = text.replace("neuroflap-flight-log", "other");
    assert!(FlightLog::read_from(wrong_format.as_bytes()).is_err());
    let mut lines: Vec<&str> = text.lines().collect();
    let last = lines.len() - 1;
    lines.swap(last, last - 1);
    assert!(FlightLog::read_from(lines.join("\n").as_bytes()).is_err());
}

#[test]
fn quiet_flight_needs_no_correction() {
    let log = synth_flight(&SynthConfig::quiet(), &ExpertConfig::default(), 3).unwrap();
    for r in &log.records {
        assert!(r.o_theta.abs() < 1e-9 && r.o_psi.abs() < 1e-9, "{r:?}");
        assert!(r.pitch.abs() < 1e-9 && r.roll.abs() < 1e-9);
    }
}

#[test]
fn pitch_step_onset_and_sign() {
    let cfg = ExpertConfig::default();
    let n = 600;
    let imu: Vec<ImuSample> = (0..n)
        .map(|k| ImuSample {
            t: k as f64 * cfg.dt,
            gyro: [0.0; 3],
            accel: [0.0, 0.0, 9.81],
        })
        .collect();
    let step_at = 300;
    let theta_ref: Vec<f64> = (0..n).map(|k| if k >= step_at { 10.0 } else { 0.0 }).collect();
    let (records, trace) = generate_expert_trace(&imu, &theta_ref, &vec![0.0; n], &cfg).unwrap();
    assert_eq!(trace.pitch_terms[step_at].p, 6.0);
    assert!(records[step_at].o_theta > 0.0);
    assert!(records[step_at - 1].o_theta.abs() < 1e-12);
    // Nose-up offset shifts both wings equally.
    assert_eq!(records[step_at].pwm_l, records[step_at].pwm_r);
}

#[test]
fn heading_error_turns_wings_apart() {
    let cfg = ExpertConfig::default();
    let n = 300;
    let imu: Vec<ImuSample> = (0..n)
        .map(|k| ImuSample {
            t: 2.0 + k as f64 * cfg.dt,
            gyro: [0.0; 3],
            accel: [0.0, 0.0, 9.81],
        })
        .collect();
    let psi_ref = vec![190.0; n];
    let records = generate_expert_labels(&imu, &vec![0.0; n], &psi_ref, &cfg).unwrap();
    // 190 wraps to -170, so the shortest turn is negative.
    let want = 0.15 * wrap_angle(190.0);
    assert!((records[0].o_psi - (-15.0f64).max(want)).abs() < 1e-12);
    assert!(records.iter().all(|r| r.o_theta == 0.0));
}

fn dominant_frequency(signal: &[f64], dt: f64, min_hz: f64) -> f64 {
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let df = 1.0 / (dt * buf.len() as f64);
    let (k, _) = buf[..buf.len() / 2]
        .iter()
        .enumerate()
        .filter(|(k, _)| *k as f64 * df >= min_hz)
        .map(|(k, c)| (k, c.norm()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    k as f64 * df
}

#[test]
fn imu_undulation_peaks_at_flapping_frequency() {
    let quiet = SynthConfig {
        pitch_undulation: 4.0,
        roll_undulation: 1.5,
        ..SynthConfig::quiet()
    };
    let traj = synth_trajectory(&quiet, 2).unwrap();
    let start = (quiet.lead_in / quiet.dt) as usize + 100;
    let f = dominant_frequency(&traj.pitch[start..], quiet.dt, 0.0);
    assert!((f - 3.25).abs() < 0.05, "{f}");

    let cfg = SynthConfig::default();
    let traj = synth_trajectory(&cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let imu = synth_imu(&traj, &cfg.noise, [0.0; 3], &mut rng);
    let gy: Vec<f64> = imu[start..].iter().map(|s| s.gyro[1]).collect();
    let f = dominant_frequency(&gy, cfg.dt, 1.0);
    assert!((f - 3.25).abs() < 0.05, "{f}");
}

#[test]
fn madgwick_tracks_synthetic_attitude() {
    let cfg = SynthConfig {
        duration: 30.0,
        ..SynthConfig::default()
    };
    let log = synth_flight(&cfg, &ExpertConfig::default(), 9).unwrap();
    let traj = synth_trajectory(&cfg, 9).unwrap();
    let start = 500;
    let n = (log.len() - start) as f64;
    let rms = |f: &dyn Fn(usize) -> f64| ((start..log.len()).map(|k| f(k).powi(2)).sum::<f64>() / n).sqrt();
    let pitch = rms(&|k| log.records[k].pitch - traj.pitch[k]);
    let roll = rms(&|k| log.records[k].roll - traj.roll[k]);
    assert!(pitch < 1.0 && roll < 1.0, "pitch {pitch} roll {roll}");
}

#[test]
fn madgwick_static_convergence_from_random_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..20 {
        let roll: f64 = rng.random_range(-20.0f64..20.0).to_radians();
        let pitch: f64 = rng.random_range(-20.0f64..20.0).to_radians();
        let truth = Quaternion::from_euler(roll, pitch, 0.0);
        let axis = {
            let v: [f64; 3] = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-9);
            v.map(|x| x / n)
        };
        let angle = rng.random_range(1.0f64..30.0).to_radians();
        let (s, c) = (angle / 2.0).sin_cos();
        let err = Quaternion([c, axis[0] * s, axis[1] * s, axis[2] * s]);
        let mut filter = Madgwick::with_orientation(0.1, truth.mul(&err).normalized());

        let accel = neuroflap::expert::synth::gravity_in_body(roll, pitch);
        for _ in 0..500 {
            filter.update([0.0; 3], accel, 0.01);
        }
        let (r, p) = filter.roll_pitch_deg();
        let (er, ep) = ((r - roll.to_degrees()).abs(), (p - pitch.to_degrees()).abs());
        assert!(er < 0.5 && ep < 0.5, "trial {trial}: roll err {er}, pitch err {ep}");
    }
}

#[test]
fn dataset_generation_is_deterministic() {
    let cfg = SynthConfig {
        duration: 4.0,
        ..SynthConfig::default()
    };
    let a = neuroflap::expert::synth_dataset(&cfg, &ExpertConfig::default(), 11, 3).unwrap();
    let b = neuroflap::expert::synth_dataset(&cfg, &ExpertConfig::default(), 11, 3).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0].records, a[1].records);
}
