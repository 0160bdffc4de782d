//! SpecRNet audio DeepFake detection, the pure algorithmic half.
//!
//! Everything in this crate is `no_std` + `alloc`: waveform preprocessing,
//! the LFCC front-end, a small dense-tensor network engine with analytic
//! backward passes, the SpecRNet architecture itself, ROC metrics and the
//! `SRNW` named-tensor container codec. File IO, training orchestration,
//! benchmarking and the CLI live in the `specrnet` crate.
//!
//! The `std` feature (on by default) only switches the math and GEMM
//! backends to their std-accelerated variants; the API is identical.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod audio;
pub mod container;
pub mod error;
mod gemm;
pub mod lfcc;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{FeatureMap, Tensor};
