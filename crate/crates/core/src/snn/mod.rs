//! Discrete-time CUBA-LIF spiking networks: equation-level operations, layer
//! parameters, and a stateful dense / event-driven runtime.

pub mod format;
pub mod layer;
pub mod network;
pub mod ops;

pub use layer::{LayerKind, LayerState, NeuronParams, Readout, SpikingLayer};
pub use network::{
    network_step, reset_state, ControllerVariant, MacTally, Mode, Network, NetworkSpec,
    SubNetwork, SubRuntime, Topology, IMU_DIM, REF_DIM, STATE_DIM,
};
pub use ops::{
    active_set, event_driven_accumulate, fire, inject_input, readout, step_membrane,
    step_synaptic_current,
};
