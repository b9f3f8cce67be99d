//! File formats, checkpoints, latency timing and the `tgl` command line on
//! top of `tgl-core`.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod embedder;
pub mod embtable;
pub mod error;
pub mod export;
pub mod io;
pub mod manifest;
pub mod pipeline;

pub use error::{Error, Result};
