//! Overhauser-field feedback under pulsed Ramsey sequences.
//!
//! * [`model`]: count rate, pumping profile, pulse-map oracle, flip-rate estimate.
//! * [`meanfield`]: the one-variable drift, its relaxation and its roots.
//! * [`sweep`]: delay scans with hysteresis, fringe maps, nullclines.
//! * [`lattice`]: full-distribution oracles for small nuclear chains.
//! * [`config`], [`output`], [`cli`]: the command-line driver.
//!
//! Angular frequencies are rad/ns, times ns, rates 1/ns throughout.

pub mod cli;
pub mod config;
pub mod error;
pub mod lattice;
pub mod meanfield;
pub mod model;
pub mod output;
pub mod sweep;

pub use error::{Error, Result};
pub use lattice::{Lattice, MomentReport};
pub use meanfield::{MeanFieldParams, RatioUnits, SteadyState};
pub use model::{HoleNuclearParams, ModelParams};
pub use sweep::{SweepSchedule, TraceSample};
