//! Trajectory-matching dataset distillation with flat teacher trajectories.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command-line front end live in the `ftd` crate.
#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autograd;
pub mod buffer;
pub mod data;
pub mod distill;
pub mod evaldiag;
pub mod models;
pub mod nas;
pub mod rng;
pub mod sharpness;
mod error;

pub use error::{Error, Result};
