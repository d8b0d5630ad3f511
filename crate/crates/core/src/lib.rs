//! Near-field wideband hybrid beamforming for THz integrated sensing and
//! communications.
//!
//! * [`array`]: near-field ULA geometry, steering vectors, beam-squint map,
//!   dictionaries.
//! * [`channel`]: multipath draws and per-subcarrier channel matrices.
//! * [`design`]: matching-pursuit hybrid design with beam-squint-aware
//!   baseband compensation.
//! * [`metrics`]: covariance, beampattern, spectral efficiency.
//! * [`sim`]: Monte Carlo experiment harness and CSV output.

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod channel;
pub mod design;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod sim;

pub use error::{Error, Result};
