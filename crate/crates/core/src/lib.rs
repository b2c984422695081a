//! Simulation and analysis toolkit for two-photon absorption and
//! sum-frequency generation driven by squeezed vacuum, from isolated photon
//! pairs to bright squeezed vacuum.
//!
//! * [`model`]: rate laws, cross-sections, flux and mode accounting
//! * [`source`]: photon-number and joint-spectrum samplers, loss
//! * [`spectrometry`]: fiber time-of-flight spectrometer simulation
//! * [`detection`]: chopped photon counting and time-tag streams
//! * [`analysis`]: differential rates, thresholds, power-law and crossover fits
//! * [`scenario`]: config-driven pipelines used by the `tpa-sim` binary

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod detection;
pub mod error;
pub mod model;
pub mod rng;
pub mod scenario;
pub mod source;
pub mod spectrometry;

pub use error::{Error, Result};
