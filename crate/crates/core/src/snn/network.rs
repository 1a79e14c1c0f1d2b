//! Subnetworks, the estimator→controller cascade, and the stateful runtime.

use crate::error::{check_len, Error, Result};
use crate::real::Real;

use super::layer::{LayerKind, LayerState, Readout, SpikingLayer};
use super::ops::{collect_active, dense_sweep, event_sweep, membrane_update, spike, ColMajor};

/// Raw six-axis IMU channels fed to the estimator: gyro xyz (rad/s), accel xyz (m/s²).
pub const IMU_DIM: usize = 6;
/// Estimator outputs: roll (deg), pitch (deg), yaw rate (deg/s).
pub const STATE_DIM: usize = 3;
/// Controller reference/measurement channels: pitch reference (deg), yaw
/// tracking error (deg), gyro xyz (rad/s).
pub const REF_DIM: usize = 5;

/// How spike-mediated products are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Dense,
    EventDriven,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Dense => "dense",
            Mode::EventDriven => "event-driven",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Mode::Dense),
            "event-driven" | "event_driven" | "event" => Ok(Mode::EventDriven),
            other => Err(Error::Format(format!("unknown mode {other:?}"))),
        }
    }
}

/// What the controller's readout represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerVariant {
    /// Symmetric stroke offset `o_theta` (deg).
    PitchOffset,
    /// Antisymmetric stroke offset `o_psi` (deg).
    YawOffset,
    /// Left/right servo pulse widths (µs), no oscillator in the loop.
    Pwm,
}

impl ControllerVariant {
    pub fn outputs(self) -> usize {
        match self {
            ControllerVariant::PitchOffset | ControllerVariant::YawOffset => 1,
            ControllerVariant::Pwm => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerVariant::PitchOffset => "pitch-offset",
            ControllerVariant::YawOffset => "yaw-offset",
            ControllerVariant::Pwm => "pwm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pitch-offset" | "pitch" => Ok(ControllerVariant::PitchOffset),
            "yaw-offset" | "yaw" => Ok(ControllerVariant::YawOffset),
            "pwm" | "cpg-agnostic" => Ok(ControllerVariant::Pwm),
            other => Err(Error::Format(format!("unknown controller variant {other:?}"))),
        }
    }
}

/// Layer sizes of a subnetwork, used to build fresh parameter sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub inputs: usize,
    pub layers: Vec<(LayerKind, usize)>,
    pub outputs: usize,
}

impl Topology {
    /// Feedforward layer, recurrent layer, readout of the three state channels.
    pub fn estimator(ff: usize, rec: usize) -> Self {
        Self {
            inputs: IMU_DIM,
            layers: vec![(LayerKind::Feedforward, ff), (LayerKind::Recurrent, rec)],
            outputs: STATE_DIM,
        }
    }

    pub fn controller(rec: usize, variant: ControllerVariant) -> Self {
        Self {
            inputs: REF_DIM + STATE_DIM,
            layers: vec![(LayerKind::Recurrent, rec)],
            outputs: variant.outputs(),
        }
    }

    pub fn default_estimator() -> Self {
        Self::estimator(150, 150)
    }

    pub fn default_controller(variant: ControllerVariant) -> Self {
        Self::controller(130, variant)
    }
}

/// A stack of spiking layers with a readout and fixed channel scales.
///
/// Inputs are multiplied by `input_scale` before injection and readout values
/// are divided by `output_scale` to return to physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct SubNetwork<F = f32> {
    pub layers: Vec<SpikingLayer<F>>,
    pub readout: Readout<F>,
    pub input_scale: Vec<F>,
    pub output_scale: Vec<F>,
}

impl<F: Real> SubNetwork<F> {
    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs())
    }

    pub fn outputs(&self) -> usize {
        self.readout.outputs()
    }

    pub fn topology(&self) -> Topology {
        Topology {
            inputs: self.inputs(),
            layers: self.layers.iter().map(|l| (l.kind, l.size())).collect(),
            outputs: self.outputs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::contract("subnetwork without spiking layers"));
        }
        let mut width = self.inputs();
        for layer in &self.layers {
            check_len("layer input width", width, layer.inputs())?;
            layer.validate()?;
            width = layer.size();
        }
        check_len("readout width", width, self.readout.w_out.cols())?;
        if !self.readout.w_out.is_finite() {
            return Err(Error::NonFinite("readout weights".into()));
        }
        check_len("input scale", self.inputs(), self.input_scale.len())?;
        check_len("output scale", self.outputs(), self.output_scale.len())?;
        for c in self.input_scale.iter().chain(&self.output_scale) {
            if *c == F::zero() || !c.is_finite() {
                return Err(Error::contract("scale entries must be finite and nonzero"));
            }
        }
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> SubNetwork<G> {
        let c = |v: &F| G::lit(v.as_f64());
        SubNetwork {
            layers: self.layers.iter().map(|l| l.cast()).collect(),
            readout: self.readout.cast(),
            input_scale: self.input_scale.iter().map(c).collect(),
            output_scale: self.output_scale.iter().map(c).collect(),
        }
    }

    /// Total matrix entries, split into dense input projection and
    /// spike-mediated matrices.
    pub fn matrix_sizes(&self) -> (u64, u64) {
        let mut dense = 0u64;
        let mut spiking = 0u64;
        for (l, layer) in self.layers.iter().enumerate() {
            let w_in = (layer.w_in.rows() * layer.w_in.cols()) as u64;
            if l == 0 {
                dense += w_in;
            } else {
                spiking += w_in;
            }
            if let Some(w) = &layer.w_rec {
                spiking += (w.rows() * w.cols()) as u64;
            }
        }
        spiking += (self.readout.w_out.rows() * self.readout.w_out.cols()) as u64;
        (dense, spiking)
    }
}

/// Complete cascade: estimator, then controller fed `[refs; estimate]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub estimator: SubNetwork<f32>,
    pub controller: SubNetwork<f32>,
    pub variant: ControllerVariant,
    pub mode: Mode,
}

impl NetworkSpec {
    /// Width of the reference/measurement block of the controller input.
    pub fn ref_dim(&self) -> usize {
        self.controller.inputs().saturating_sub(self.estimator.outputs())
    }

    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        self.controller.validate()?;
        check_len("estimator outputs", STATE_DIM, self.estimator.outputs())?;
        check_len("estimator inputs", IMU_DIM, self.estimator.inputs())?;
        if self.controller.inputs() < self.estimator.outputs() {
            return Err(Error::contract(
                "controller input must hold the estimator output",
            ));
        }
        check_len(
            "controller outputs",
            self.variant.outputs(),
            self.controller.outputs(),
        )?;
        Ok(())
    }
}

/// Multiply-accumulate tally of the instrumented kernels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MacTally {
    /// Dense projections of continuous inputs.
    pub input: u64,
    /// Products driven by binary spikes (hidden, recurrent and readout).
    pub spike_mediated: u64,
}

impl MacTally {
    pub fn total(&self) -> u64 {
        self.input + self.spike_mediated
    }
}

impl std::ops::AddAssign for MacTally {
    fn add_assign(&mut self, rhs: Self) {
        self.input += rhs.input;
        self.spike_mediated += rhs.spike_mediated;
    }
}

/// One spiking layer with its preallocated state and scratch buffers.
#[derive(Clone, Debug)]
pub(crate) struct LayerRuntime<F> {
    spiking_input: bool,
    w_in: ColMajor<F>,
    w_rec: Option<ColMajor<F>>,
    alpha: Vec<F>,
    beta: Vec<F>,
    theta: Vec<F>,
    pub(crate) state: LayerState<F>,
    pub(crate) active: Vec<usize>,
    in_acc: Vec<F>,
    rec_acc: Vec<F>,
}

impl<F: Real> LayerRuntime<F> {
    pub(crate) fn new(layer: &SpikingLayer<F>, spiking_input: bool) -> Self {
        let n = layer.size();
        Self {
            spiking_input,
            w_in: ColMajor::from_matrix(&layer.w_in),
            w_rec: layer.w_rec.as_ref().map(ColMajor::from_matrix),
            alpha: layer.params.alpha.clone(),
            beta: layer.params.beta.clone(),
            theta: layer.params.theta.clone(),
            state: LayerState::zeros(n),
            active: Vec::with_capacity(n),
            in_acc: vec![F::zero(); n],
            rec_acc: vec![F::zero(); n],
        }
    }

    pub(crate) fn reset(&mut self) {
        self.state.reset();
        self.active.clear();
    }

    /// Advance one tick. `input` is the scaled continuous input for the
    /// first layer, or the spike vector (with its active list) of the layer
    /// below.
    pub(crate) fn step(
        &mut self,
        input: &[F],
        input_active: &[usize],
        mode: Mode,
        tally: Option<&mut MacTally>,
    ) -> Result<()> {
        let n = self.state.len();
        if self.spiking_input {
            match mode {
                Mode::Dense => dense_sweep(&mut self.in_acc, &self.w_in, input),
                Mode::EventDriven => event_sweep(&mut self.in_acc, &self.w_in, input_active),
            }
        } else {
            dense_sweep(&mut self.in_acc, &self.w_in, input);
        }
        if let Some(w) = &self.w_rec {
            match mode {
                Mode::Dense => dense_sweep(&mut self.rec_acc, w, &self.state.spikes),
                Mode::EventDriven => event_sweep(&mut self.rec_acc, w, &self.active),
            }
        }
        if let Some(t) = tally {
            let rows = n as u64;
            let cols = self.w_in.cols() as u64;
            if !self.spiking_input {
                t.input += rows * cols;
            } else {
                t.spike_mediated += match mode {
                    Mode::Dense => rows * cols,
                    Mode::EventDriven => rows * input_active.len() as u64,
                };
            }
            if self.w_rec.is_some() {
                t.spike_mediated += match mode {
                    Mode::Dense => rows * rows,
                    Mode::EventDriven => rows * self.active.len() as u64,
                };
            }
        }

        let st = &mut self.state;
        let recurrent = self.w_rec.is_some();
        let mut nan = false;
        for i in 0..n {
            let current = st.syn_current[i];
            let v = membrane_update(self.beta[i], st.membrane[i], st.spikes[i], current);
            let mut next = self.alpha[i] * current;
            if self.spiking_input {
                next += self.in_acc[i];
            }
            if recurrent {
                next += self.rec_acc[i];
            }
            if !self.spiking_input {
                next += self.in_acc[i];
            }
            nan |= v.is_nan();
            st.membrane[i] = v;
            st.syn_current[i] = next;
            st.spikes[i] = spike(v, self.theta[i]);
        }
        if nan {
            return Err(Error::contract("NaN membrane potential"));
        }
        collect_active(&st.spikes, &mut self.active);
        Ok(())
    }
}

/// Runtime instance of one subnetwork with fixed-size buffers.
#[derive(Clone, Debug)]
pub struct SubRuntime<F = f32> {
    pub(crate) layers: Vec<LayerRuntime<F>>,
    readout: ColMajor<F>,
    input_scale: Vec<F>,
    output_scale: Vec<F>,
    scaled_in: Vec<F>,
    scaled_out: Vec<F>,
    out: Vec<F>,
    mode: Mode,
    instrument: bool,
    tally: MacTally,
}

impl<F: Real> SubRuntime<F> {
    pub fn new(net: &SubNetwork<F>, mode: Mode) -> Result<Self> {
        net.validate()?;
        let layers = net
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| LayerRuntime::new(layer, l > 0))
            .collect();
        Ok(Self {
            layers,
            readout: ColMajor::from_matrix(&net.readout.w_out),
            input_scale: net.input_scale.clone(),
            output_scale: net.output_scale.clone(),
            scaled_in: vec![F::zero(); net.inputs()],
            scaled_out: vec![F::zero(); net.outputs()],
            out: vec![F::zero(); net.outputs()],
            mode,
            instrument: false,
            tally: MacTally::default(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn inputs(&self) -> usize {
        self.input_scale.len()
    }

    pub fn outputs(&self) -> usize {
        self.output_scale.len()
    }

    /// Enable multiply-accumulate counting in the kernels.
    pub fn set_instrumented(&mut self, on: bool) {
        self.instrument = on;
    }

    pub fn tally(&self) -> MacTally {
        self.tally
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.reset();
        }
        self.tally = MacTally::default();
    }

    /// One tick on a physical-unit input; returns physical-unit outputs.
    pub fn step(&mut self, x: &[F]) -> Result<&[F]> {
        check_len("subnetwork input", self.input_scale.len(), x.len())?;
        for ((s, &v), &c) in self.scaled_in.iter_mut().zip(x).zip(&self.input_scale) {
            *s = v * c;
        }
        self.advance()?;
        for ((o, &y), &c) in self.out.iter_mut().zip(&self.scaled_out).zip(&self.output_scale) {
            *o = y / c;
        }
        Ok(&self.out)
    }

    /// One tick on an already scaled input; returns scaled outputs.
    pub fn step_scaled(&mut self, x: &[F]) -> Result<&[F]> {
        check_len("subnetwork input", self.scaled_in.len(), x.len())?;
        self.scaled_in.copy_from_slice(x);
        self.advance()?;
        Ok(&self.scaled_out)
    }

    fn advance(&mut self) -> Result<()> {
        let mode = self.mode;
        let mut tally = if self.instrument {
            Some(MacTally::default())
        } else {
            None
        };
        let (first, rest) = self.layers.split_first_mut().expect("validated non-empty");
        first.step(&self.scaled_in, &[], mode, tally.as_mut())?;
        let mut below: &LayerRuntime<F> = first;
        for layer in rest.iter_mut() {
            layer.step(&below.state.spikes, &below.active, mode, tally.as_mut())?;
            below = layer;
        }
        match mode {
            Mode::Dense => dense_sweep(&mut self.scaled_out, &self.readout, &below.state.spikes),
            Mode::EventDriven => event_sweep(&mut self.scaled_out, &self.readout, &below.active),
        }
        if let Some(mut t) = tally {
            let rows = self.readout.rows() as u64;
            t.spike_mediated += match mode {
                Mode::Dense => rows * self.readout.cols() as u64,
                Mode::EventDriven => rows * below.active.len() as u64,
            };
            self.tally += t;
        }
        Ok(())
    }

    /// Physical-unit output of the last [`SubRuntime::step`].
    pub fn last_output(&self) -> &[F] {
        &self.out
    }

    /// Spike counts of each layer after the last tick.
    pub fn spike_counts(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers.iter().map(|l| l.active.len())
    }

    pub fn layer_states(&self) -> impl Iterator<Item = &LayerState<F>> {
        self.layers.iter().map(|l| &l.state)
    }

    pub fn layer_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers.iter().map(|l| l.state.len())
    }
}

/// The deployed cascade: one call per 100 Hz tick.
#[derive(Clone, Debug)]
pub struct Network {
    pub(crate) estimator: SubRuntime<f32>,
    pub(crate) controller: SubRuntime<f32>,
    ctrl_in: Vec<f32>,
    variant: ControllerVariant,
    estimate: Vec<f32>,
}

impl Network {
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        Self::with_mode(spec, spec.mode)
    }

    pub fn with_mode(spec: &NetworkSpec, mode: Mode) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            estimator: SubRuntime::new(&spec.estimator, mode)?,
            controller: SubRuntime::new(&spec.controller, mode)?,
            ctrl_in: vec![0.0; spec.controller.inputs()],
            variant: spec.variant,
            estimate: vec![0.0; spec.estimator.outputs()],
        })
    }

    pub fn variant(&self) -> ControllerVariant {
        self.variant
    }

    pub fn mode(&self) -> Mode {
        self.estimator.mode()
    }

    pub fn ref_dim(&self) -> usize {
        self.ctrl_in.len() - self.estimate.len()
    }

    pub fn set_instrumented(&mut self, on: bool) {
        self.estimator.set_instrumented(on);
        self.controller.set_instrumented(on);
    }

    pub fn tally(&self) -> MacTally {
        let mut t = self.estimator.tally();
        t += self.controller.tally();
        t
    }

    /// Zero every layer state (and the MAC tally).
    pub fn reset_state(&mut self) {
        self.estimator.reset();
        self.controller.reset();
    }

    /// Run the estimator, feed `[refs_meas; estimate]` to the controller,
    /// and return `(state_estimate, control)` in physical units.
    pub fn step(&mut self, imu: &[f32], refs_meas: &[f32]) -> Result<(&[f32], &[f32])> {
        check_len("network_step refs/measurements", self.ref_dim(), refs_meas.len())?;
        self.estimate(imu)?;
        self.control(refs_meas)?;
        Ok((&self.estimate, self.controller.last_output()))
    }

    /// First half of [`Network::step`]: advance the estimator only. Callers
    /// that derive references from the estimate (the integrated yaw) use
    /// this, then [`Network::control`] in the same tick.
    pub fn estimate(&mut self, imu: &[f32]) -> Result<&[f32]> {
        let est = self.estimator.step(imu)?;
        self.estimate.copy_from_slice(est);
        Ok(&self.estimate)
    }

    /// Second half of [`Network::step`]: advance the controller on
    /// `[refs_meas; last estimate]`.
    pub fn control(&mut self, refs_meas: &[f32]) -> Result<&[f32]> {
        let d_r = self.ref_dim();
        check_len("network_step refs/measurements", d_r, refs_meas.len())?;
        self.ctrl_in[..d_r].copy_from_slice(refs_meas);
        self.ctrl_in[d_r..].copy_from_slice(&self.estimate);
        self.controller.step(&self.ctrl_in)
    }

    /// Per-layer spike counts of the last tick: estimator layers, then controller layers.
    pub fn spike_counts(&self) -> Vec<usize> {
        self.estimator
            .spike_counts()
            .chain(self.controller.spike_counts())
            .collect()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.estimator
            .layer_sizes()
            .chain(self.controller.layer_sizes())
            .collect()
    }

    pub fn estimator(&self) -> &SubRuntime<f32> {
        &self.estimator
    }

    pub fn controller(&self) -> &SubRuntime<f32> {
        &self.controller
    }

    /// Controller input formed at the last tick.
    pub fn controller_input(&self) -> &[f32] {
        &self.ctrl_in
    }
}

/// Free-function form of [`Network::step`].
pub fn network_step<'a>(
    net: &'a mut Network,
    imu: &[f32],
    refs_meas: &[f32],
) -> Result<(&'a [f32], &'a [f32])> {
    net.step(imu, refs_meas)
}

/// Free-function form of [`Network::reset_state`].
pub fn reset_state(net: &mut Network) {
    net.reset_state()
}
