mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use neuroflap::codegen::{
    compare_traces, emit, hex_float, read_harness_output, reference_trace, validate_export,
    write_harness_output, ExportArtifact, Harness, Manifest, Trace, ValidationStatus,
};
use neuroflap::error::Error;
use neuroflap::expert::{synth_flight, ExpertConfig, SynthConfig};
use neuroflap::matrix::Matrix;
use neuroflap::snn::{ControllerVariant, Mode, NetworkSpec};
use neuroflap::train::rms_scales;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_inputs, random_spec};

/// Decode a C hex-float literal with plain integer arithmetic.
fn decode_hex_literal(s: &str) -> f32 {
    let s = s.strip_suffix('f').expect("float suffix");
    let (neg, s) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let s = s.strip_prefix("0x").expect("hex prefix");
    let (mantissa, exp) = s.split_once('p').expect("binary exponent");
    let exp: i32 = exp.parse().unwrap();
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let mut value = u64::from_str_radix(int, 16).unwrap() as f64;
    for (k, d) in frac.chars().enumerate() {
        value += d.to_digit(16).unwrap() as f64 / 16f64.powi(k as i32 + 1);
    }
    // Exact: at most 25 significant bits, and powi of two is exact.
    let v = (value * 2f64.powi(exp)) as f32;
    if neg {
        -v
    } else {
        v
    }
}

#[test]
fn hex_literals_round_trip_exactly() {
    let special = [
        0.0f32,
        -0.0,
        1.0,
        -1.5,
        f32::MIN_POSITIVE,
        f32::from_bits(1),
        f32::from_bits(0x007f_ffff),
        f32::MAX,
        f32::MIN,
        0.1,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let random = (0..20_000).map(|_| f32::from_bits(rng.random::<u32>())).filter(|v| v.is_finite());
    for v in special.into_iter().chain(random) {
        let lit = hex_float(v);
        assert_eq!(decode_hex_literal(&lit).to_bits(), v.to_bits(), "{v:e} -> {lit}");
    }
    assert_eq!(hex_float(1.0), "0x1.000000p+0f");
    assert_eq!(hex_float(-0.0), "-0x0p+0f");
}

#[test]
fn emission_is_deterministic_and_mode_specific() {
    let spec = random_spec(1, (8, 8), 6, ControllerVariant::Pwm);
    let a = emit(&spec, Mode::Dense).unwrap();
    let b = emit(&spec, Mode::Dense).unwrap();
    assert_eq!(a, b);
    let e = emit(&spec, Mode::EventDriven).unwrap();
    assert_ne!(a.kernel_text, e.kernel_text);
    assert_eq!(a.manifest.spec_hash, e.manifest.spec_hash);
    for text in [&a.header_text, &a.kernel_text, &e.kernel_text] {
        assert!(!text.contains("malloc") && !text.contains("calloc") && !text.contains("realloc"));
    }
}

#[test]
fn non_finite_weights_are_refused() {
    for bad in [f32::NAN, f32::INFINITY] {
        let mut spec = random_spec(2, (4, 4), 4, ControllerVariant::PitchOffset);
        spec.controller.readout.w_out.set(0, 1, bad);
        assert!(matches!(emit(&spec, Mode::Dense), Err(Error::NonFinite(_))));
        let mut spec = random_spec(2, (4, 4), 4, ControllerVariant::PitchOffset);
        spec.estimator.layers[1].params.theta[0] = bad;
        assert!(matches!(emit(&spec, Mode::EventDriven), Err(Error::NonFinite(_))));
    }
}

#[test]
fn manifest_binds_artifact_to_spec() {
    let spec = random_spec(3, (5, 5), 4, ControllerVariant::YawOffset);
    let art = emit(&spec, Mode::EventDriven).unwrap();
    assert_eq!(Manifest::parse(&art.manifest.to_text()).unwrap(), art.manifest);
    art.verify(&spec).unwrap();

    let mut other = spec.clone();
    other.controller.readout.w_out.set(0, 0, 0.25);
    assert!(art.verify(&other).is_err());

    let dir = tempfile::tempdir().unwrap();
    art.write_dir(dir.path()).unwrap();
    assert_eq!(ExportArtifact::load_dir(dir.path()).unwrap(), art);
    let kernel = dir.path().join("nf_net.c");
    let text = std::fs::read_to_string(&kernel).unwrap();
    std::fs::write(&kernel, text.replacen("0.0f", "1.0f", 1)).unwrap();
    assert!(ExportArtifact::load_dir(dir.path()).is_err());
}

#[test]
fn self_comparison_has_zero_deviation() {
    let spec = random_spec(4, (6, 6), 5, ControllerVariant::Pwm);
    let inputs = random_inputs(&spec, 300, 9);
    let trace = reference_trace(&spec, Mode::Dense, &inputs).unwrap();
    let report = compare_traces(&trace, &trace, 0.0);
    assert!(report.passed());
    assert!(report.max_deviation.iter().all(|&d| d == 0.0));
    assert_eq!(report.steps, 300);

    let mut shifted = trace.clone();
    shifted.outputs[17][3] += 1e-3;
    let report = compare_traces(&trace, &shifted, 1e-5);
    assert!(matches!(report.status, ValidationStatus::Failed(_)));

    let mut spikes = trace.clone();
    spikes.spikes[5][0] += 1;
    let report = compare_traces(&trace, &spikes, 1.0);
    assert_eq!(report.first_spike_mismatch, Some(5));
    assert!(!report.passed());
}

#[test]
fn unavailable_harness_is_skipped_not_passed() {
    let spec = random_spec(5, (4, 4), 4, ControllerVariant::PitchOffset);
    let art = emit(&spec, Mode::Dense).unwrap();
    let inputs = random_inputs(&spec, 10, 1);
    let reference = reference_trace(&spec, Mode::Dense, &inputs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for harness in [
        Harness::Unavailable("not built".into()),
        Harness::Program(dir.path().join("missing-harness")),
        Harness::Source {
            compiler: "cc".into(),
            driver: dir.path().join("missing.c"),
        },
        Harness::Source {
            compiler: "no-such-compiler-xyz".into(),
            driver: fixture_driver(),
        },
    ] {
        let report = validate_export(&art, &inputs, &reference, 1e-5, &harness, dir.path()).unwrap();
        assert!(matches!(report.status, ValidationStatus::Skipped(_)), "{harness:?}");
        assert!(!report.passed());
    }
}

/// A stand-in harness that ignores its input and copies a canned output,
/// exercising the subprocess protocol without a C toolchain.
fn canned_harness(dir: &Path, output: &Path) -> PathBuf {
    let script = dir.join("canned.sh");
    std::fs::write(&script, format!("#!/bin/sh\ncp '{}' \"$2\"\n", output.display())).unwrap();
    Command::new("chmod").arg("+x").arg(&script).status().unwrap();
    script
}

#[test]
fn subprocess_protocol_round_trip() {
    let spec = random_spec(6, (6, 6), 5, ControllerVariant::Pwm);
    let art = emit(&spec, Mode::EventDriven).unwrap();
    let inputs = random_inputs(&spec, 200, 2);
    let reference = reference_trace(&spec, Mode::EventDriven, &inputs).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let canned = dir.path().join("canned.csv");
    write_harness_output(&canned, &reference).unwrap();
    assert_eq!(read_harness_output(&canned, 5, 3).unwrap(), reference);
    let harness = Harness::Program(canned_harness(dir.path(), &canned));
    let report = validate_export(&art, &inputs, &reference, 1e-5, &harness, &dir.path().join("w")).unwrap();
    assert!(report.passed(), "{report:?}");

    let mut bad = reference.clone();
    bad.outputs[150][0] += 0.5;
    write_harness_output(&canned, &bad).unwrap();
    let report = validate_export(&art, &inputs, &reference, 1e-5, &harness, &dir.path().join("w")).unwrap();
    assert!(matches!(report.status, ValidationStatus::Failed(_)));
    assert!(report.max_deviation[0] > 0.4);
}

fn fixture_driver() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/harness.c")
}

fn have_cc() -> bool {
    let ok = Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success());
    if !ok {
        eprintln!("no C compiler on PATH; compiled-artifact checks not run");
    }
    ok
}

fn compiled() -> Harness {
    Harness::Source {
        compiler: "cc".into(),
        driver: fixture_driver(),
    }
}

fn run_compiled(spec: &NetworkSpec, mode: Mode, inputs: &[Vec<f32>], reference: &Trace) -> neuroflap::codegen::ValidationReport {
    let art = emit(spec, mode).unwrap();
    let dir = tempfile::tempdir().unwrap();
    validate_export(&art, inputs, reference, 1e-5, &compiled(), dir.path()).unwrap()
}

#[test]
fn compiled_artifact_matches_reference_in_both_modes() {
    if !have_cc() {
        return;
    }
    let spec = random_spec(7, (12, 10), 9, ControllerVariant::Pwm);
    let inputs = random_inputs(&spec, 1000, 3);
    let reference = reference_trace(&spec, Mode::Dense, &inputs).unwrap();
    let total: u32 = reference.spikes.iter().flatten().sum();
    assert!(total > 0, "fixture network never fires");
    for mode in [Mode::Dense, Mode::EventDriven] {
        let report = run_compiled(&spec, mode, &inputs, &reference);
        assert!(report.passed(), "{mode:?}: {report:?}");
        // The emitted arithmetic mirrors the runtime exactly.
        assert!(report.max_deviation.iter().all(|&d| d == 0.0), "{mode:?}: {:?}", report.max_deviation);
    }
}

#[test]
fn compiled_zero_weight_artifact_outputs_zeros() {
    if !have_cc() {
        return;
    }
    let mut spec = random_spec(8, (5, 5), 4, ControllerVariant::YawOffset);
    for net in [&mut spec.estimator, &mut spec.controller] {
        for l in &mut net.layers {
            l.w_in = Matrix::zeros(l.w_in.rows(), l.w_in.cols());
            if let Some(w) = &mut l.w_rec {
                *w = Matrix::zeros(w.rows(), w.cols());
            }
        }
        net.readout.w_out = Matrix::zeros(net.readout.w_out.rows(), net.readout.w_out.cols());
    }
    let inputs = random_inputs(&spec, 50, 4);
    let zeros = Trace {
        outputs: vec![vec![0.0; 4]; 50],
        spikes: vec![vec![0; 3]; 50],
    };
    let report = run_compiled(&spec, Mode::EventDriven, &inputs, &zeros);
    assert!(report.passed(), "{report:?}");
}

#[test]
fn compiled_fault_injection_is_detected() {
    if !have_cc() {
        return;
    }
    let spec = random_spec(9, (10, 10), 8, ControllerVariant::PitchOffset);
    let inputs = random_inputs(&spec, 1000, 5);
    let reference = reference_trace(&spec, Mode::Dense, &inputs).unwrap();
    // Perturb the readout synapse of the controller neuron that fires most.
    let mut rt = neuroflap::snn::Network::new(&spec).unwrap();
    let mut fired = vec![0usize; 8];
    for row in &inputs {
        rt.step(&row[..6], &row[6..]).unwrap();
        for (f, &s) in fired.iter_mut().zip(&rt.controller().layer_states().last().unwrap().spikes) {
            *f += s as usize;
        }
    }
    let j = (0..8).max_by_key(|&j| fired[j]).unwrap();
    assert!(fired[j] > 0);
    let mut faulty = spec.clone();
    let w = faulty.controller.readout.w_out.get(0, j);
    faulty.controller.readout.w_out.set(0, j, w + 1e-2);
    let report = run_compiled(&faulty, Mode::EventDriven, &inputs, &reference);
    assert!(matches!(report.status, ValidationStatus::Failed(_)), "{report:?}");
}

#[test]
fn compiled_harness_edge_cases() {
    if !have_cc() {
        return;
    }
    let spec = random_spec(10, (4, 4), 4, ControllerVariant::PitchOffset);
    let art = emit(&spec, Mode::Dense).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = validate_export(&art, &[], &Trace::default(), 1e-5, &compiled(), dir.path()).unwrap();
    assert!(report.passed());
    assert_eq!(std::fs::read(dir.path().join("output.csv")).unwrap().len(), 0);

    let exe = dir.path().join("harness");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2,3\n").unwrap();
    let out = Command::new(&exe).arg(&bad).arg(dir.path().join("o.csv")).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn compiled_default_size_artifact_on_recorded_flight() {
    if !have_cc() {
        return;
    }
    let synth = SynthConfig {
        duration: 100.0,
        ..SynthConfig::default()
    };
    let log = synth_flight(&synth, &ExpertConfig::default(), 11).unwrap();
    let inputs = neuroflap::codegen::harness_inputs(&log).unwrap();
    assert_eq!(inputs.len(), 10_000);
    let mut spec = random_spec(12, (150, 150), 130, ControllerVariant::Pwm);
    let cols = |range: std::ops::Range<usize>| {
        Matrix::from_fn(inputs.len(), range.len(), |t, c| inputs[t][range.start + c] as f64)
    };
    let est_scale = rms_scales([&cols(0..6)]).unwrap();
    spec.estimator.input_scale = est_scale.iter().map(|&c| c as f32).collect();
    let ctl = cols(6..11);
    let mut ctl_scale: Vec<f32> = rms_scales([&ctl]).unwrap().iter().map(|&c| c as f32).collect();
    ctl_scale.extend([0.1f32; 3]);
    spec.controller.input_scale = ctl_scale;
    let reference = reference_trace(&spec, Mode::EventDriven, &inputs).unwrap();
    for layer in 0..3 {
        assert!(reference.spikes.iter().any(|s| s[layer] > 0), "layer {layer} silent");
    }
    let report = run_compiled(&spec, Mode::EventDriven, &inputs, &reference);
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.steps, 10_000);
}
