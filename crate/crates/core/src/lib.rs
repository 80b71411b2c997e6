//! Federated optimization core.
//!
//! Everything here is pure computation over `alloc` collections: dense
//! parameter vectors, synthetic client objectives, data partitioners,
//! client-side local SGD, server-side optimizers applied to the
//! pseudo-gradient, round orchestration and convergence-bound evaluators.
//! File formats, the CLI and thread pools live in the `fedopt` crate.

#![no_std]

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod client;
pub mod error;
pub mod fedloop;
pub mod math;
pub mod numkit;
pub mod partition;
pub mod rng;
pub mod schedule;
pub mod server;
pub mod tasks;
pub mod theory;

pub use error::{Error, Result};
pub use numkit::ParamVector;
