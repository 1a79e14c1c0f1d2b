//! The file protocol of the compiled harness and differential validation.
//!
//! Input CSV: one row per tick, no header, the raw network inputs (IMU then
//! the reference/measurement block). Output CSV: one row per input row, the
//! state estimate, the control outputs, then the spike count of every layer.
//! Reals are written with 17 significant digits so text round-trips exactly.
//! The harness is invoked as `harness <input.csv> <output.csv>`.

use std::path::{Path, PathBuf};
use std::process::Command;

use crate::error::{Error, Result};
use crate::expert::FlightLog;
use crate::snn::{Mode, Network, NetworkSpec};
use crate::train::dataset::{controller_refs, log_gyro_bias};

use super::{ExportArtifact, KERNEL_FILE};

/// Per-tick outputs and spike counts of a cascade run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    /// State estimate followed by control outputs.
    pub outputs: Vec<Vec<f32>>,
    /// Spikes per layer, estimator layers first.
    pub spikes: Vec<Vec<u32>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

/// Run the reference runtime from reset over `inputs`.
pub fn reference_trace(spec: &NetworkSpec, mode: Mode, inputs: &[Vec<f32>]) -> Result<Trace> {
    let mut net = Network::with_mode(spec, mode)?;
    let d_imu = spec.estimator.inputs();
    let mut trace = Trace::default();
    for row in inputs {
        if row.len() != d_imu + net.ref_dim() {
            return Err(Error::Dimension {
                context: "harness input row",
                expected: d_imu + net.ref_dim(),
                got: row.len(),
            });
        }
        let (est, ctl) = net.step(&row[..d_imu], &row[d_imu..])?;
        trace.outputs.push(est.iter().chain(ctl).copied().collect());
        trace.spikes.push(net.spike_counts().into_iter().map(|c| c as u32).collect());
    }
    Ok(trace)
}

/// Network inputs of a recorded log as the board would form them: gyro
/// corrected by the calibration bias, accelerometer, and the reference
/// block built from the logged heading.
pub fn harness_inputs(log: &FlightLog) -> Result<Vec<Vec<f32>>> {
    let bias = log_gyro_bias(log)?;
    Ok(log
        .records
        .iter()
        .map(|r| {
            let g = [0, 1, 2].map(|i| r.imu.gyro[i] - bias[i]);
            g.iter()
                .chain(&r.imu.accel)
                .copied()
                .chain(controller_refs(r.theta_ref, r.psi_ref, r.yaw, g))
                .map(|v| v as f32)
                .collect()
        })
        .collect())
}

fn real(v: f32) -> String {
    format!("{:.16e}", v as f64)
}

pub fn write_harness_input(path: &Path, rows: &[Vec<f32>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| real(v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn parse_f32(field: &str, line: u64, path: &Path) -> Result<f32> {
    field
        .parse::<f64>()
        .map(|v| v as f32)
        .map_err(|_| Error::Format(format!("{}:{line}: {field:?} is not a number", path.display())))
}

pub fn read_harness_input(path: &Path, width: usize) -> Result<Vec<Vec<f32>>> {
    let mut rows = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::Format(format!(
                "{}:{line}: expected {width} fields, found {}",
                path.display(),
                rec.len()
            )));
        }
        rows.push(rec.iter().map(|f| parse_f32(f, line, path)).collect::<Result<_>>()?);
    }
    Ok(rows)
}

pub fn write_harness_output(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for (out, spikes) in trace.outputs.iter().zip(&trace.spikes) {
        let fields: Vec<String> = out
            .iter()
            .map(|&v| real(v))
            .chain(spikes.iter().map(|c| c.to_string()))
            .collect();
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parse a harness output file of `outputs` reals and `layers` counts per row.
pub fn read_harness_output(path: &Path, outputs: usize, layers: usize) -> Result<Trace> {
    let mut trace = Trace::default();
    for rec in reader(path)?.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != outputs + layers {
            return Err(Error::Format(format!(
                "{}:{line}: expected {} fields, found {}",
                path.display(),
                outputs + layers,
                rec.len()
            )));
        }
        let out = rec.iter().take(outputs).map(|f| parse_f32(f, line, path)).collect::<Result<_>>()?;
        let spikes = rec
            .iter()
            .skip(outputs)
            .map(|f| {
                f.parse::<u32>()
                    .map_err(|_| Error::Format(format!("{}:{line}: {f:?} is not a spike count", path.display())))
            })
            .collect::<Result<_>>()?;
        trace.outputs.push(out);
        trace.spikes.push(spikes);
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidationStatus {
    Passed,
    Failed(String),
    /// The comparison never ran; never to be read as a pass.
    Skipped(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub status: ValidationStatus,
    pub steps: usize,
    pub tolerance: f64,
    /// Largest absolute output deviation per channel.
    pub max_deviation: Vec<f64>,
    /// Ticks whose spike counts differ in any layer.
    pub spike_mismatches: usize,
    pub first_spike_mismatch: Option<usize>,
}

impl ValidationReport {
    pub fn skipped(reason: impl Into<String>, tolerance: f64) -> Self {
        Self {
            status: ValidationStatus::Skipped(reason.into()),
            steps: 0,
            tolerance,
            max_deviation: Vec::new(),
            spike_mismatches: 0,
            first_spike_mismatch: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == ValidationStatus::Passed
    }
}

/// Compare an observed trace with the reference: outputs within `tol`
/// absolute per channel, spike counts exactly.
pub fn compare_traces(reference: &Trace, observed: &Trace, tol: f64) -> ValidationReport {
    let channels = reference.outputs.first().map_or(0, Vec::len);
    let mut report = ValidationReport {
        status: ValidationStatus::Passed,
        steps: reference.len(),
        tolerance: tol,
        max_deviation: vec![0.0; channels],
        spike_mismatches: 0,
        first_spike_mismatch: None,
    };
    if reference.len() != observed.len() {
        report.status = ValidationStatus::Failed(format!(
            "{} reference ticks but {} observed",
            reference.len(),
            observed.len()
        ));
        return report;
    }
    for (t, (r, o)) in reference.outputs.iter().zip(&observed.outputs).enumerate() {
        if r.len() != o.len() {
            report.status = ValidationStatus::Failed(format!("tick {t}: {} outputs, expected {}", o.len(), r.len()));
            return report;
        }
        for (m, (a, b)) in report.max_deviation.iter_mut().zip(r.iter().zip(o)) {
            let d = (*a as f64 - *b as f64).abs();
            // NaN compares false, so track it explicitly.
            if d.is_nan() || d > *m {
                *m = if d.is_nan() { f64::INFINITY } else { d };
            }
        }
    }
    for (t, (r, o)) in reference.spikes.iter().zip(&observed.spikes).enumerate() {
        if r != o {
            report.spike_mismatches += 1;
            report.first_spike_mismatch.get_or_insert(t);
        }
    }
    let worst = report.max_deviation.iter().cloned().fold(0.0, f64::max);
    if report.spike_mismatches > 0 {
        report.status = ValidationStatus::Failed(format!(
            "spike counts differ on {} ticks, first at tick {}",
            report.spike_mismatches,
            report.first_spike_mismatch.unwrap_or(0)
        ));
    } else if worst > tol {
        report.status = ValidationStatus::Failed(format!("output deviation {worst:e} exceeds {tol:e}"));
    }
    report
}

/// How to obtain a runnable harness for an artifact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Harness {
    /// A harness executable already built against the artifact.
    Program(PathBuf),
    /// A harness driver source, compiled together with the artifact.
    Source { compiler: String, driver: PathBuf },
    Unavailable(String),
}

impl Harness {
    /// `NEUROFLAP_HARNESS` names a built harness, `NEUROFLAP_HARNESS_SRC` a
    /// driver source compiled with `$CC` (default `cc`).
    pub fn from_env() -> Self {
        if let Some(p) = std::env::var_os("NEUROFLAP_HARNESS") {
            return Harness::Program(p.into());
        }
        if let Some(p) = std::env::var_os("NEUROFLAP_HARNESS_SRC") {
            return Harness::Source {
                compiler: std::env::var("CC").unwrap_or_else(|_| "cc".into()),
                driver: p.into(),
            };
        }
        Harness::Unavailable("neither NEUROFLAP_HARNESS nor NEUROFLAP_HARNESS_SRC is set".into())
    }

    /// Compile if needed; `Err(reason)` when no harness can be produced.
    fn prepare(&self, artifact: &ExportArtifact, work: &Path) -> Result<std::result::Result<PathBuf, String>> {
        match self {
            Harness::Unavailable(reason) => Ok(Err(reason.clone())),
            Harness::Program(p) => Ok(Ok(p.clone())),
            Harness::Source { compiler, driver } => {
                if !driver.is_file() {
                    return Ok(Err(format!("harness driver {} not found", driver.display())));
                }
                artifact.write_dir(work)?;
                let exe = work.join("harness");
                let out = Command::new(compiler)
                    .args(["-std=c99", "-O2", "-ffp-contract=off", "-fno-fast-math", "-I"])
                    .arg(work)
                    .arg("-o")
                    .arg(&exe)
                    .arg(driver)
                    .arg(work.join(KERNEL_FILE))
                    .arg("-lm")
                    .output();
                match out {
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                        Ok(Err(format!("compiler {compiler:?} not found")))
                    }
                    Err(e) => Err(Error::io(compiler.as_str(), e)),
                    Ok(o) if !o.status.success() => Err(Error::Process(format!(
                        "compiling the harness failed: {}",
                        String::from_utf8_lossy(&o.stderr)
                    ))),
                    Ok(_) => Ok(Ok(exe)),
                }
            }
        }
    }
}

/// Drive the artifact through the harness on `inputs` and compare with
/// `reference`. Work files go under `work`.
pub fn validate_export(
    artifact: &ExportArtifact,
    inputs: &[Vec<f32>],
    reference: &Trace,
    tol: f64,
    harness: &Harness,
    work: &Path,
) -> Result<ValidationReport> {
    artifact.verify_sources()?;
    std::fs::create_dir_all(work).map_err(|e| Error::io(work, e))?;
    let exe = match harness.prepare(artifact, work)? {
        Ok(exe) => exe,
        Err(reason) => return Ok(ValidationReport::skipped(reason, tol)),
    };
    let input = work.join("input.csv");
    let output = work.join("output.csv");
    write_harness_input(&input, inputs)?;
    let out = Command::new(&exe).arg(&input).arg(&output).output();
    let out = match out {
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(ValidationReport::skipped(format!("harness {} not found", exe.display()), tol))
        }
        Err(e) => return Err(Error::io(&exe, e)),
        Ok(o) => o,
    };
    if !out.status.success() {
        return Err(Error::Process(format!(
            "harness exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        )));
    }
    let channels = reference.outputs.first().map_or(0, Vec::len);
    let layers = reference.spikes.first().map_or(0, Vec::len);
    let observed = read_harness_output(&output, channels, layers)?;
    Ok(compare_traces(reference, &observed, tol))
}
