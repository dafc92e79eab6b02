//! Two capacitively coupled current-biased Josephson phase qubits: static
//! spectrum, time evolution under a detuning pulse, and gate extraction.

pub mod config;
pub mod error;
pub mod evolution;
pub mod gates;
pub mod grid;
pub mod model;
pub mod optimize;
pub mod spectrum;

pub use config::{ParameterSource, RunConfig, ScheduleOverrides};
pub use error::{Error, Result};
pub use grid::{Axis, Grid2D, Wavefunction2D};
pub use model::{BiasPair, CircuitParams, DerivedScales, Device, PotentialKind, PulseSchedule, RampShape};
