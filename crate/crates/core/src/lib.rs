#![no_std]
//! Session graphs, the temporal graph network, and its training, serving and
//! evaluation logic. Everything here is allocation-only; IO lives in `tgl`.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod embed;
pub mod eval;
pub mod error;
pub mod extract;
pub mod graph;
pub mod hash;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod serve;
pub mod session;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
