//! File-system side of SpecRNet: WAV decoding, manifests, cached features,
//! checkpoints, training, evaluation, the benchmark protocols and the CLI.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod fsutil;
pub mod protocol;
pub mod synthetic;
pub mod train;
pub mod wav;

pub use error::{Error, Result};
