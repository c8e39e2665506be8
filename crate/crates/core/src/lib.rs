//! Split federated learning for UAV sensing networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: elevation angles, logistic LoS/sensing probability, channel gain,
//!   data rate and the closed-form UAV placement.
//! - [`delay`]: per-round and per-cycle delay accounting.
//! - [`convergence`]: participation weights, the gap bound and the minimum number
//!   of rounds to reach a target accuracy, plus estimation of the bound constants
//!   from a probe run.
//! - [`optimizer`]: the delay-to-accuracy objective and the block coordinate
//!   descent over aggregation period, batch size, split layer and sensing probability.
//! - [`engine`]: an executable split federated learning protocol on a small MLP.
//! - [`io`]: configuration, CSV/SVG output and the command implementations behind
//!   the `sfl-lab` binary.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod delay;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod io;
pub mod optimizer;
pub mod root;

pub use error::{Error, Result};
