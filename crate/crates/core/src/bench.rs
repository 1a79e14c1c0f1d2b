//! Inference cost of the ANN baseline and the dense and event-driven SNN
//! cascades: exact multiply-accumulate counts and host per-tick latency.
//!
//! Host latency is an ordinal comparison between variants on this machine,
//! not an estimate of microcontroller timings.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::error::{check_len, Error, Result};
use crate::snn::{Mode, Network, NetworkSpec};
use crate::train::{AnnNet, AnnRuntime};

/// The ANN estimator→controller cascade, wired like [`Network`].
#[derive(Clone, Debug, PartialEq)]
pub struct AnnCascade {
    pub estimator: AnnNet<f32>,
    pub controller: AnnNet<f32>,
}

impl AnnCascade {
    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        self.controller.validate()?;
        if self.controller.inputs() < self.estimator.outputs() {
            return Err(Error::contract("controller input must hold the estimator output"));
        }
        Ok(())
    }

    pub fn ref_dim(&self) -> usize {
        self.controller.inputs() - self.estimator.outputs()
    }

    pub fn macs_per_tick(&self) -> u64 {
        self.estimator.macs_per_tick() + self.controller.macs_per_tick()
    }
}

struct AnnCascadeRuntime {
    est: AnnRuntime<f32>,
    ctl: AnnRuntime<f32>,
    ctl_in: Vec<f32>,
    d_imu: usize,
    d_ref: usize,
}

impl AnnCascadeRuntime {
    fn new(c: &AnnCascade) -> Result<Self> {
        c.validate()?;
        Ok(Self {
            est: AnnRuntime::new(&c.estimator)?,
            ctl: AnnRuntime::new(&c.controller)?,
            ctl_in: vec![0.0; c.controller.inputs()],
            d_imu: c.estimator.inputs(),
            d_ref: c.ref_dim(),
        })
    }

    fn reset(&mut self) {
        self.est.reset();
        self.ctl.reset();
    }

    fn step(&mut self, row: &[f32]) -> Result<(&[f32], &[f32])> {
        check_len("ANN cascade input row", self.d_imu + self.d_ref, row.len())?;
        let est = self.est.step(&row[..self.d_imu])?;
        self.ctl_in[..self.d_ref].copy_from_slice(&row[self.d_imu..]);
        self.ctl_in[self.d_ref..].copy_from_slice(est);
        let ctl = self.ctl.step(&self.ctl_in)?;
        Ok((self.est.last_output(), ctl))
    }
}

/// Multiply-accumulate totals over one input sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MacCounts {
    pub ticks: u64,
    /// Dense projections of continuous inputs, identical in both modes.
    pub input: u64,
    /// Spike-mediated products evaluated by the dense kernels.
    pub dense_spike_mediated: u64,
    /// Spike-mediated products evaluated by the event-driven kernels.
    pub event_spike_mediated: u64,
    /// Every product of the ANN cascade, when one was given.
    pub ann: Option<u64>,
}

impl MacCounts {
    pub fn dense(&self) -> u64 {
        self.input + self.dense_spike_mediated
    }

    pub fn event(&self) -> u64 {
        self.input + self.event_spike_mediated
    }
}

/// Per-layer spike counts of every tick, estimator layers first.
pub fn spike_trains(spec: &NetworkSpec, inputs: &[Vec<f32>]) -> Result<Vec<Vec<usize>>> {
    let mut net = Network::with_mode(spec, Mode::EventDriven)?;
    let d_imu = spec.estimator.inputs();
    inputs
        .iter()
        .map(|row| {
            check_len("bench input row", d_imu + net.ref_dim(), row.len())?;
            net.step(&row[..d_imu], &row[d_imu..])?;
            Ok(net.spike_counts())
        })
        .collect()
}

/// Dense counts from the matrix sizes; event-driven counts from the
/// recorded spike trains, `active presynaptic x postsynaptic rows` for every
/// spike-mediated matrix.
pub fn count_macs(spec: &NetworkSpec, inputs: &[Vec<f32>], ann: Option<&AnnCascade>) -> Result<MacCounts> {
    spec.validate()?;
    let trains = spike_trains(spec, inputs)?;
    let ticks = inputs.len() as u64;
    let mut counts = MacCounts {
        ticks,
        ann: ann.map(|a| a.macs_per_tick() * ticks),
        ..MacCounts::default()
    };
    let mut offset = 0;
    for net in [&spec.estimator, &spec.controller] {
        let (dense_in, spiking) = net.matrix_sizes();
        counts.input += dense_in * ticks;
        counts.dense_spike_mediated += spiking * ticks;
        let sizes: Vec<u64> = net.layers.iter().map(|l| l.size() as u64).collect();
        let top = offset + net.layers.len() - 1;
        for (t, counts_t) in trains.iter().enumerate() {
            let mut macs = 0u64;
            for (l, layer) in net.layers.iter().enumerate() {
                if l > 0 {
                    macs += counts_t[offset + l - 1] as u64 * sizes[l];
                }
                if layer.w_rec.is_some() && t > 0 {
                    macs += trains[t - 1][offset + l] as u64 * sizes[l];
                }
            }
            macs += counts_t[top] as u64 * net.outputs() as u64;
            counts.event_spike_mediated += macs;
        }
        offset += net.layers.len();
    }
    Ok(counts)
}

/// Mean fraction of neurons firing per tick, per layer.
pub fn spike_rates(spec: &NetworkSpec, inputs: &[Vec<f32>]) -> Result<Vec<f64>> {
    let trains = spike_trains(spec, inputs)?;
    let sizes: Vec<usize> = spec
        .estimator
        .layers
        .iter()
        .chain(&spec.controller.layers)
        .map(|l| l.size())
        .collect();
    let ticks = trains.len().max(1) as f64;
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(l, &n)| trains.iter().map(|c| c[l]).sum::<usize>() as f64 / (n as f64 * ticks))
        .collect())
}

/// Neuron-weighted mean of per-layer spike rates.
pub fn mean_spike_rate(spec: &NetworkSpec, rates: &[f64]) -> f64 {
    let sizes: Vec<f64> = spec
        .estimator
        .layers
        .iter()
        .chain(&spec.controller.layers)
        .map(|l| l.size() as f64)
        .collect();
    let total: f64 = sizes.iter().sum();
    sizes.iter().zip(rates).map(|(n, r)| n * r).sum::<f64>() / total
}

/// SHA-256 over the bit patterns of an input sequence.
pub fn input_identity(inputs: &[Vec<f32>]) -> String {
    let mut h = Sha256::new();
    for row in inputs {
        h.update((row.len() as u64).to_le_bytes());
        for v in row {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Ann,
    Dense,
    EventDriven,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ann => "ann",
            Variant::Dense => "snn-dense",
            Variant::EventDriven => "snn-event",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantReport {
    pub variant: Variant,
    pub median_ns: f64,
    pub p95_ns: f64,
    /// Exact total over the sequence.
    pub macs: u64,
    pub macs_per_tick: f64,
    /// Coefficient of variation of the per-repetition medians.
    pub spread: f64,
    /// `spread` above [`BenchConfig::max_spread`].
    pub unstable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub input_id: String,
    pub ticks: usize,
    pub repetitions: usize,
    pub variants: Vec<VariantReport>,
    /// Mean firing fraction per layer, estimator layers first.
    pub spike_rates: Vec<f64>,
    pub mean_spike_rate: f64,
}

impl BenchReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantReport> {
        self.variants.iter().find(|r| r.variant == v)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "variant",
            "median_ns",
            "p95_ns",
            "macs",
            "macs_per_tick",
            "spread",
            "unstable",
            "mean_spike_rate",
            "spike_rates",
            "ticks",
            "repetitions",
            "input_id",
        ])?;
        let rates: Vec<String> = self.spike_rates.iter().map(|r| format!("{r:.6}")).collect();
        for v in &self.variants {
            let spiking = v.variant != Variant::Ann;
            out.write_record([
                v.variant.as_str(),
                &format!("{:.1}", v.median_ns),
                &format!("{:.1}", v.p95_ns),
                &v.macs.to_string(),
                &format!("{:.3}", v.macs_per_tick),
                &format!("{:.4}", v.spread),
                &v.unstable.to_string(),
                &if spiking { format!("{:.6}", self.mean_spike_rate) } else { String::new() },
                &if spiking { rates.join(";") } else { String::new() },
                &self.ticks.to_string(),
                &self.repetitions.to_string(),
                &self.input_id,
            ])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    /// Timed repetitions of the whole sequence; at least 30.
    pub repetitions: usize,
    /// Untimed repetitions run first.
    pub warmup: usize,
    /// Flag variants whose per-repetition medians vary more than this.
    pub max_spread: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            repetitions: 30,
            warmup: 2,
            max_spread: 0.2,
        }
    }
}

fn percentile(sorted: &[u64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let w = rank - lo as f64;
    sorted[lo] as f64 * (1.0 - w) + sorted[hi] as f64 * w
}

enum Runner {
    Ann(AnnCascadeRuntime),
    Snn(Network),
}

impl Runner {
    fn reset(&mut self) {
        match self {
            Runner::Ann(r) => r.reset(),
            Runner::Snn(n) => n.reset_state(),
        }
    }

    /// Run the sequence from reset, timing each tick into `times` if given.
    fn run(&mut self, inputs: &[Vec<f32>], d_imu: usize, mut times: Option<&mut Vec<u64>>, outputs: Option<&mut Vec<f32>>) -> Result<()> {
        self.reset();
        let mut sink = outputs;
        for row in inputs {
            let start = Instant::now();
            let (est, ctl) = match self {
                Runner::Ann(r) => r.step(black_box(row))?,
                Runner::Snn(n) => n.step(black_box(&row[..d_imu]), black_box(&row[d_imu..]))?,
            };
            let (est, ctl) = black_box((est, ctl));
            let elapsed = start.elapsed().as_nanos() as u64;
            if let Some(t) = times.as_deref_mut() {
                t.push(elapsed);
            }
            if let Some(o) = sink.as_deref_mut() {
                o.extend_from_slice(est);
                o.extend_from_slice(ctl);
            }
        }
        Ok(())
    }
}

/// Per-tick latency and MAC counts of each variant on `inputs`.
///
/// All variants start every repetition from reset on the same sequence, and
/// repetitions interleave the variants so slow drifts of the host affect
/// them alike. Outputs of the timed runs are checked against an untimed run.
pub fn bench_latency(spec: &NetworkSpec, ann: Option<&AnnCascade>, inputs: &[Vec<f32>], cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.repetitions < 30 {
        return Err(Error::contract("latency benchmarks need at least 30 repetitions"));
    }
    if inputs.is_empty() {
        return Err(Error::contract("latency benchmark on an empty sequence"));
    }
    let macs = count_macs(spec, inputs, ann)?;
    let d_imu = spec.estimator.inputs();
    let mut runners: Vec<(Variant, Runner)> = Vec::new();
    if let Some(a) = ann {
        check_len("ANN cascade reference width", spec.ref_dim(), a.ref_dim())?;
        runners.push((Variant::Ann, Runner::Ann(AnnCascadeRuntime::new(a)?)));
    }
    runners.push((Variant::Dense, Runner::Snn(Network::with_mode(spec, Mode::Dense)?)));
    runners.push((Variant::EventDriven, Runner::Snn(Network::with_mode(spec, Mode::EventDriven)?)));

    let mut expected = Vec::new();
    for (_, r) in &mut runners {
        let mut out = Vec::new();
        r.run(inputs, d_imu, None, Some(&mut out))?;
        expected.push(out);
    }
    for _ in 0..cfg.warmup {
        for (_, r) in &mut runners {
            r.run(inputs, d_imu, None, None)?;
        }
    }
    let mut times: Vec<Vec<u64>> = vec![Vec::with_capacity(inputs.len() * cfg.repetitions); runners.len()];
    let mut rep_medians: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.repetitions); runners.len()];
    let mut rep = Vec::with_capacity(inputs.len());
    let mut out = Vec::with_capacity(expected.first().map_or(0, Vec::len));
    for _ in 0..cfg.repetitions {
        for (k, (v, r)) in runners.iter_mut().enumerate() {
            rep.clear();
            out.clear();
            r.run(inputs, d_imu, Some(&mut rep), Some(&mut out))?;
            if out.iter().map(|x| x.to_bits()).ne(expected[k].iter().map(|x| x.to_bits())) {
                return Err(Error::contract(format!("{} outputs changed between runs", v.as_str())));
            }
            times[k].extend_from_slice(&rep);
            rep.sort_unstable();
            rep_medians[k].push(percentile(&rep, 0.5));
        }
    }
    let ticks = macs.ticks.max(1) as f64;
    let variants = runners
        .iter()
        .zip(times.iter_mut().zip(&rep_medians))
        .map(|((v, _), (t, meds))| {
            t.sort_unstable();
            let mean = meds.iter().sum::<f64>() / meds.len() as f64;
            let var = meds.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / meds.len() as f64;
            let spread = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
            let total = match v {
                Variant::Ann => macs.ann.unwrap_or(0),
                Variant::Dense => macs.dense(),
                Variant::EventDriven => macs.event(),
            };
            VariantReport {
                variant: *v,
                median_ns: percentile(t, 0.5),
                p95_ns: percentile(t, 0.95),
                macs: total,
                macs_per_tick: total as f64 / ticks,
                spread,
                unstable: spread > cfg.max_spread,
            }
        })
        .collect();
    let rates = spike_rates(spec, inputs)?;
    Ok(BenchReport {
        input_id: input_identity(inputs),
        ticks: inputs.len(),
        repetitions: cfg.repetitions,
        variants,
        mean_spike_rate: mean_spike_rate(spec, &rates),
        spike_rates: rates,
    })
}
