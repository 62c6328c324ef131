//! Sampled-data adaptive control toolkit coupling an extremum-seeking command
//! generator with predictive cost adaptive control.
//!
//! The crate provides:
//!
//! - [`plant`]: continuous-time LTI plants under zero-order-hold sampled-data
//!   control, with exact matrix-exponential discretization and measured cost maps.
//! - [`sysid`]: online ARX identification by recursive least squares, with
//!   F-test variable-rate forgetting and an exponential-resetting variant.
//! - [`mpc`]: assembly of the receding-horizon prediction operators and the
//!   constrained quadratic program from the current model estimate.
//! - [`qp`]: a dense dual active-set QP solver with warm-start support.
//! - [`ecg`]: the extremum-seeking command generator pipeline
//!   (highpass, demodulation, lowpass, integrator) with dither modulation.
//! - [`scenario`] / [`config`]: closed-loop orchestration, scenario presets,
//!   CSV logging, and summary metrics.

pub mod config;
pub mod ecg;
pub mod error;
pub mod fdist;
pub mod mpc;
pub mod plant;
pub mod qp;
pub mod scenario;
pub mod sysid;

pub use error::{Error, Result};
