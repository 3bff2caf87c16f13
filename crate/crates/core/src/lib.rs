//! Single-stage SAR automatic target recognition with a small fully
//! convolutional encoder/decoder.
//!
//! The encoder produces a coarse per-cell class grid (one cell per 16x16
//! pixels) whose pooled average gives a chip-level class; the decoder
//! upsamples it 16x into a per-pixel label map from which individual
//! targets are extracted.

pub mod cli;
pub mod data;
pub mod error;
pub mod kernel;
pub mod metrics;
pub mod net;
pub mod regions;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Result, SaversError};
pub use tensor::Tensor;
