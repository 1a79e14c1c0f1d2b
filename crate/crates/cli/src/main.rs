//! `neuroflap`: synthetic demonstrations, training, offline evaluation,
//! C export, differential validation and inference benchmarks.

mod config;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser, Subcommand};
use log::info;

use neuroflap::bench::{bench_latency, count_macs, AnnCascade, BenchConfig, Variant};
use neuroflap::codegen::{
    emit, harness_inputs, reference_trace, validate_export, ExportArtifact, Harness, ValidationStatus,
};
use neuroflap::eval::{channel_names, evaluate, predict_log, Predictor};
use neuroflap::expert::{load_logs, synth_dataset, ExpertConfig, FlightLog, SynthConfig};
use neuroflap::snn::{Mode, NetworkSpec};
use neuroflap::train::dataset::validation_count;
use neuroflap::train::{
    fit, write_history_csv, Checkpoint, InitConfig, Model, ModelKind, Role, Sizes, TrainConfig,
};

/// Spec file written next to an exported artifact.
const SPEC_FILE: &str = "network.spec";
/// Exit status of `validate` when no harness could be run.
const EXIT_SKIPPED: u8 = 3;

#[derive(Parser)]
#[command(name = "neuroflap", version, about = "Spiking estimator/controller cascade for a flapping-wing robot")]
struct Cli {
    /// `key: value` file of flag defaults for the subcommand; flags given on
    /// the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize labelled flight logs into a directory of CSV files.
    GenData(GenData),
    /// Fit an estimator or controller (SNN or ANN) and write a checkpoint.
    Train(Train),
    /// Replay a checkpoint, or the expert, on logs and report RMSE and correlation.
    Eval(Eval),
    /// Compile an estimator and a controller checkpoint into C sources.
    Export(Export),
    /// Compare an exported artifact, run by the C harness, with the reference runtime.
    Validate(Validate),
    /// Count multiply-accumulates and time ANN, dense and event-driven inference.
    Bench(Bench),
}

#[derive(clap::Args)]
#[command(args_override_self = true)]
struct GenData {
    #[arg(long, default_value = "data")]
    out: PathBuf,
    /// Total flight time to generate.
    #[arg(long, default_value_t = 150.0)]
    minutes: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Length of each log.
    #[arg(long, default_value_t = 60.0)]
    log_seconds: f64,
    /// Flapping and undulation frequency (Hz).
    #[arg(long, default_value_t = 3.25)]
    frequency: f64,
}

#[derive(clap::Args)]
#[command(args_override_self = true)]
struct Train {
    #[arg(long, default_value = "data")]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long, default_value = "model.ckpt")]
    out: PathBuf,
    /// estimator, pitch-offset, yaw-offset or pwm.
    #[arg(long, default_value = "estimator")]
    role: String,
    /// snn or ann.
    #[arg(long, default_value = "snn")]
    model: String,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Surrogate slope; defaults to the library's.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, default_value_t = 2500)]
    window: usize,
    #[arg(long, default_value_t = 400)]
    stride: usize,
    #[arg(long, default_value_t = 100)]
    burn_in: usize,
    /// Gradient norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 1.0)]
    clip: f64,
    #[arg(long, default_value_t = 0.15)]
    val_fraction: f64,
    /// Width of every hidden layer; overrides the per-layer sizes.
    #[arg(long)]
    neurons: Option<usize>,
    #[arg(long, default_value_t = 150)]
    estimator_ff: usize,
    #[arg(long, default_value_t = 150)]
    estimator_rec: usize,
    #[arg(long, default_value_t = 130)]
    controller_rec: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-epoch loss history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(args_override_self = true)]
struct Eval {
    #[arg(long, default_value = "data")]
    data: PathBuf,
    /// Checkpoint to replay.
    #[arg(long, required_unless_present = "expert")]
    checkpoint: Option<PathBuf>,
    /// Score the expert itself instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint", requires = "role")]
    expert: bool,
    /// Role to score; defaults to the checkpoint's.
    #[arg(long)]
    role: Option<String>,
    /// Score every log instead of the held-out tail.
    #[arg(long)]
    all_logs: bool,
    /// Held-out share, matching the one used for training.
    #[arg(long, default_value_t = 0.15)]
    val_fraction: f64,
    #[arg(long, default_value = "eval")]
    out: PathBuf,
    /// Skip the trace figure.
    #[arg(long)]
    no_plot: bool,
}

#[derive(clap::Args)]
#[command(args_override_self = true)]
struct Export {
    #[arg(long)]
    estimator: PathBuf,
    #[arg(long)]
    controller: PathBuf,
    /// dense or event-driven.
    #[arg(long, default_value = "event-driven")]
    mode: String,
    #[arg(long, default_value = "export")]
    out: PathBuf,
}

#[derive(clap::Args)]
#[command(args_override_self = true)]
struct Validate {
    /// Directory written by `export`.
    #[arg(long, default_value = "export")]
    artifact: PathBuf,
    #[arg(long, default_value = "data")]
    data: PathBuf,
    /// Index of the log to replay.
    #[arg(long, default_value_t = 0)]
    log: usize,
    /// Replay only the first steps of the log.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Prebuilt harness executable linked against the artifact.
    #[arg(long, conflicts_with = "harness_src")]
    harness: Option<PathBuf>,
    /// Harness driver source compiled with `$CC` against the artifact.
    #[arg(long)]
    harness_src: Option<PathBuf>,
    #[arg(long, default_value = "validate")]
    out: PathBuf,
}

#[derive(clap::Args)]
#[command(args_override_self = true)]
struct Bench {
    #[arg(long)]
    estimator: PathBuf,
    #[arg(long)]
    controller: PathBuf,
    /// ANN estimator checkpoint for the baseline row.
    #[arg(long, requires = "ann_controller")]
    ann_estimator: Option<PathBuf>,
    #[arg(long, requires = "ann_estimator")]
    ann_controller: Option<PathBuf>,
    #[arg(long, default_value = "data")]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    log: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 30)]
    repetitions: usize,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value = "bench")]
    out: PathBuf,
    /// Also write a latency bar chart.
    #[arg(long)]
    plot: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let args = match config::expand(&Cli::command(), std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::GenData(a) => gen_data(a),
        Cmd::Train(a) => train(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Export(a) => export(a),
        Cmd::Validate(a) => validate(a),
        Cmd::Bench(a) => bench(a),
    }
    .map(|()| ExitCode::SUCCESS)
    .or_else(|e| match e.downcast_ref::<Skipped>() {
        Some(_) => {
            eprintln!("{e}");
            Ok(ExitCode::from(EXIT_SKIPPED))
        }
        None => Err(e),
    })
}

#[derive(Debug)]
struct Skipped(String);

impl std::fmt::Display for Skipped {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "validation skipped: {}", self.0)
    }
}

impl std::error::Error for Skipped {}

fn load_data(dir: &Path) -> Result<Vec<FlightLog>> {
    let logs = load_logs(dir).with_context(|| format!("loading logs from {}", dir.display()))?;
    if logs.is_empty() {
        bail!("no *.csv logs in {}", dir.display());
    }
    Ok(logs)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn gen_data(a: GenData) -> Result<()> {
    if !(a.minutes > 0.0) || !(a.log_seconds > 0.0) {
        bail!("--minutes and --log-seconds must be positive");
    }
    let count = (a.minutes * 60.0 / a.log_seconds).ceil() as usize;
    let synth = SynthConfig {
        duration: a.log_seconds,
        frequency: a.frequency,
        ..SynthConfig::default()
    };
    let logs = synth_dataset(&synth, &ExpertConfig::default(), a.seed, count)?;
    create_dir(&a.out)?;
    for (i, log) in logs.iter().enumerate() {
        log.save(&a.out.join(format!("log_{i:04}.csv")))?;
    }
    let samples: usize = logs.iter().map(FlightLog::len).sum();
    info!(
        "wrote {count} logs ({samples} samples, {:.1} min) to {}",
        samples as f64 * synth.dt / 60.0,
        a.out.display()
    );
    Ok(())
}

fn train(a: Train) -> Result<()> {
    let role = Role::parse(&a.role)?;
    let kind = ModelKind::parse(&a.model)?;
    let logs = load_data(&a.data)?;
    let sizes = match a.neurons {
        Some(n) => Sizes::uniform(n),
        None => Sizes {
            estimator_ff: a.estimator_ff,
            estimator_rec: a.estimator_rec,
            controller_rec: a.controller_rec,
        },
    };
    let mut cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        clip_norm: (a.clip > 0.0).then_some(a.clip),
        validation_fraction: a.val_fraction,
        ..TrainConfig::default()
    };
    cfg.window.len = a.window;
    cfg.window.stride = a.stride;
    cfg.loss.burn_in = a.burn_in;
    cfg.adam.learning_rate = a.lr;
    if let Some(k) = a.kappa {
        cfg.kappa = k;
    }
    cfg.validate()?;
    info!(
        "training {} {} on {} logs for {} epochs",
        a.model,
        role.as_str(),
        logs.len(),
        cfg.epochs
    );
    let fitted = fit(&logs, role, kind, &sizes, &InitConfig::default(), &cfg, |s, _| {
        info!(
            "epoch {:>3}  train {:.5}  val {}  rho {}",
            s.epoch,
            s.train_loss,
            s.val_loss.map_or("-".into(), |v| format!("{v:.5}")),
            s.val_rho.map_or("-".into(), |v| format!("{v:.4}")),
        );
    })?;
    if let Some(reason) = &fitted.stopped {
        log::warn!("training stopped early: {reason}");
    }
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fitted.checkpoint.save(&a.out)?;
    if let Some(path) = &a.history {
        let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_history_csv(&fitted.checkpoint.history, f)?;
    }
    info!(
        "wrote {} (held-out logs {:?})",
        a.out.display(),
        fitted.val_logs
    );
    Ok(())
}

fn eval(a: Eval) -> Result<()> {
    let logs = load_data(&a.data)?;
    let checkpoint = a.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let role = match (&a.role, &checkpoint) {
        (Some(r), _) => Role::parse(r)?,
        (None, Some(c)) => c.role,
        (None, None) => bail!("--role is required with --expert"),
    };
    if let Some(c) = &checkpoint {
        if c.role != role {
            bail!("checkpoint was trained as {}, not {}", c.role.as_str(), role.as_str());
        }
    }
    let predictor = match &checkpoint {
        Some(c) => Predictor::Model(&c.model),
        None => Predictor::Expert,
    };
    let range = if a.all_logs {
        0..logs.len()
    } else {
        logs.len() - validation_count(logs.len(), a.val_fraction)..logs.len()
    };
    if range.is_empty() {
        bail!("no held-out logs; pass --all-logs");
    }
    let report = evaluate(predictor, &logs, range.clone(), role)?;
    create_dir(&a.out)?;
    let csv_path = a.out.join("eval.csv");
    report.write_csv(fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?)?;
    for (name, m) in channel_names(role).iter().zip(report.summary()) {
        println!("{:<10} {name:<9} rmse {:.4}  rho {:.4}", role.as_str(), m.rmse, m.rho);
    }
    if !a.no_plot {
        let log = &logs[range.start];
        let (pred, target) = predict_log(predictor, log, role)?;
        let t: Vec<f64> = log.records.iter().map(|r| r.imu.t).collect();
        let who = if checkpoint.is_some() { "network" } else { "replayed expert" };
        let panels: Vec<_> = channel_names(role)
            .iter()
            .enumerate()
            .map(|(c, name)| {
                (
                    name.to_string(),
                    vec![
                        ("expert".to_string(), (0..target.rows()).map(|k| target.get(k, c)).collect()),
                        (who.to_string(), (0..pred.rows()).map(|k| pred.get(k, c)).collect()),
                    ],
                )
            })
            .collect();
        let path = a.out.join(format!("{}_log{}.svg", role.as_str(), range.start));
        plot::traces(&path, &format!("{} on log {}", role.as_str(), range.start), &t, &panels)?;
    }
    info!("wrote {}", a.out.display());
    Ok(())
}

fn snn_of(c: Checkpoint, want: &str) -> Result<neuroflap::snn::SubNetwork<f32>> {
    match c.model {
        Model::Snn(n) => Ok(n),
        Model::Ann(_) => bail!("{want} checkpoint holds an ANN, not an SNN"),
    }
}

fn load_spec(estimator: &Path, controller: &Path, mode: Mode) -> Result<NetworkSpec> {
    let est = Checkpoint::load(estimator)?;
    if est.role != Role::Estimator {
        bail!("{} is a {} checkpoint", estimator.display(), est.role.as_str());
    }
    let ctl = Checkpoint::load(controller)?;
    let Role::Controller(variant) = ctl.role else {
        bail!("{} is an estimator checkpoint", controller.display());
    };
    let spec = NetworkSpec {
        estimator: snn_of(est, "estimator")?,
        controller: snn_of(ctl, "controller")?,
        variant,
        mode,
    };
    spec.validate()?;
    Ok(spec)
}

fn export(a: Export) -> Result<()> {
    let mode = Mode::parse(&a.mode)?;
    let spec = load_spec(&a.estimator, &a.controller, mode)?;
    let artifact = emit(&spec, mode)?;
    artifact.write_dir(&a.out)?;
    spec.save(&a.out.join(SPEC_FILE))?;
    info!(
        "exported {} {} cascade to {} (spec {})",
        mode.as_str(),
        spec.variant.as_str(),
        a.out.display(),
        artifact.manifest.spec_hash
    );
    Ok(())
}

fn validate(a: Validate) -> Result<()> {
    let artifact = ExportArtifact::load_dir(&a.artifact)?;
    let spec = NetworkSpec::load(&a.artifact.join(SPEC_FILE))?;
    artifact.verify(&spec)?;
    let logs = load_data(&a.data)?;
    let log = logs
        .get(a.log)
        .with_context(|| format!("log {} out of range ({} logs)", a.log, logs.len()))?;
    let mut inputs = harness_inputs(log)?;
    if let Some(n) = a.steps {
        inputs.truncate(n);
    }
    let reference = reference_trace(&spec, artifact.manifest.mode, &inputs)?;
    let harness = match (&a.harness, &a.harness_src) {
        (Some(p), _) => Harness::Program(p.clone()),
        (None, Some(src)) => Harness::Source {
            compiler: std::env::var("CC").unwrap_or_else(|_| "cc".into()),
            driver: src.clone(),
        },
        (None, None) => Harness::from_env(),
    };
    create_dir(&a.out)?;
    let report = validate_export(&artifact, &inputs, &reference, a.tol, &harness, &a.out)?;
    let text = format!(
        "status: {}\nsteps: {}\ntolerance: {:e}\nmax_deviation: {}\nspike_mismatches: {}\n",
        match &report.status {
            ValidationStatus::Passed => "passed".to_string(),
            ValidationStatus::Failed(r) => format!("failed ({r})"),
            ValidationStatus::Skipped(r) => format!("skipped ({r})"),
        },
        report.steps,
        report.tolerance,
        report.max_deviation.iter().map(|d| format!("{d:e}")).collect::<Vec<_>>().join(" "),
        report.spike_mismatches,
    );
    fs::write(a.out.join("report.txt"), &text)?;
    print!("{text}");
    match report.status {
        ValidationStatus::Passed => Ok(()),
        ValidationStatus::Failed(r) => bail!("validation failed: {r}"),
        ValidationStatus::Skipped(r) => Err(Skipped(r).into()),
    }
}

fn ann_of(path: &Path) -> Result<neuroflap::train::AnnNet<f32>> {
    match Checkpoint::load(path)?.model {
        Model::Ann(n) => Ok(n),
        Model::Snn(_) => bail!("{} holds an SNN, not an ANN", path.display()),
    }
}

fn bench(a: Bench) -> Result<()> {
    let spec = load_spec(&a.estimator, &a.controller, Mode::EventDriven)?;
    let ann = match (&a.ann_estimator, &a.ann_controller) {
        (Some(e), Some(c)) => {
            let cascade = AnnCascade {
                estimator: ann_of(e)?,
                controller: ann_of(c)?,
            };
            cascade.validate()?;
            Some(cascade)
        }
        _ => None,
    };
    let logs = load_data(&a.data)?;
    let log = logs
        .get(a.log)
        .with_context(|| format!("log {} out of range ({} logs)", a.log, logs.len()))?;
    let mut inputs = harness_inputs(log)?;
    inputs.truncate(a.steps);
    let counts = count_macs(&spec, &inputs, ann.as_ref())?;
    let cfg = BenchConfig {
        repetitions: a.repetitions,
        warmup: a.warmup,
        ..BenchConfig::default()
    };
    let report = bench_latency(&spec, ann.as_ref(), &inputs, &cfg)?;
    create_dir(&a.out)?;
    let path = a.out.join("bench.csv");
    report.write_csv(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
    println!(
        "ticks {}  mean spike rate {:.4}  event/dense spike-mediated MACs {:.4}",
        report.ticks,
        report.mean_spike_rate,
        counts.event_spike_mediated as f64 / counts.dense_spike_mediated.max(1) as f64
    );
    for v in &report.variants {
        println!(
            "{:<10} median {:>10.1} ns  p95 {:>10.1} ns  MACs/tick {:>10.1}{}",
            v.variant.as_str(),
            v.median_ns,
            v.p95_ns,
            v.macs_per_tick,
            if v.unstable { "  (unstable timing)" } else { "" }
        );
    }
    if a.plot {
        let bars: Vec<(String, f64)> = [Variant::Ann, Variant::Dense, Variant::EventDriven]
            .iter()
            .filter_map(|&v| report.variant(v).map(|r| (v.as_str().to_string(), r.median_ns)))
            .collect();
        plot::latency_bars(&a.out.join("bench.svg"), "per-tick host latency", &bars)?;
    }
    info!("wrote {}", a.out.display());
    Ok(())
}

