//! Spiking-network flight control at desk scale.
//!
//! * [`snn`]: CUBA-LIF runtime with dense and event-driven execution and the
//!   estimator→controller cascade.
//! * [`expert`]: oscillator, attitude filter, PID expert, synthetic flights and
//!   demonstration labels.
//! * [`train`]: surrogate-gradient BPTT behavioral cloning and the ANN baseline.
//! * [`codegen`]: static C export and differential validation.
//! * [`bench`]: MAC counting and per-tick latency comparison.

pub mod archive;
pub mod bench;
pub mod codegen;
pub mod error;
pub mod eval;
pub mod expert;
pub mod matrix;
pub mod real;
pub mod snn;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use real::Real;
