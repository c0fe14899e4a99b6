//! Multiscaled multi-head attention video transformer, self-contained.
//!
//! The crate provides, bottom up:
//!
//! - [`tensor`]: dense `f32`/`f64` tensors with reverse-mode autodiff and a
//!   finite-difference gradient oracle;
//! - [`attention`]: scaled dot-product attention, the uniform multi-head
//!   baseline and the multiscaled variant with a pyramid head schedule;
//! - [`model`]: a transformer classifier over frame-token sequences
//!   (linear frame embedding, sinusoidal positions, pre-norm encoder stages,
//!   mean-pool readout);
//! - [`fusion`]: decision-level late fusion of per-stream class posteriors;
//! - [`data`]: synthetic multimodal gesture sequences plus binary dataset and
//!   checkpoint formats;
//! - [`train`]: cross-entropy loss, Adam with a step decay schedule, the
//!   training/evaluation loops, the gradient-check suite and the attention
//!   cost benchmark.
//!
//! The `msmha` binary exposes all of it as `gen-data`, `train`, `eval`,
//! `fuse`, `gradcheck` and `bench` subcommands.

pub mod attention;
pub mod data;
pub mod error;
pub mod fusion;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{GradientMap, Scalar, Tensor};
