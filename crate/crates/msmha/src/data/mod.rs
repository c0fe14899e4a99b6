//! Synthetic multimodal gesture sequences and the two on-disk formats:
//! datasets (`MSGV`) and model checkpoints. All scalars are 32-bit
//! little-endian on disk so other languages can read them byte for byte.

mod checkpoint;
mod format;
mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use format::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use synth::{generate_dataset, SynthConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Schema entry for one modality stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamSpec {
    pub tag: String,
    /// Frame-feature width F of this stream.
    pub frame_dim: usize,
}

/// One gesture: a `[T, F]` feature tensor per stream plus a class label.
/// `streams` is aligned with the owning [`Dataset::streams`] order.
#[derive(Debug, Clone)]
pub struct GestureSample {
    pub label: usize,
    pub streams: Vec<Tensor<f32>>,
}

/// A labelled collection of multimodal gesture sequences.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Frames per sequence, shared by every stream.
    pub sequence_length: usize,
    pub class_count: usize,
    pub streams: Vec<StreamSpec>,
    pub samples: Vec<GestureSample>,
}

impl Dataset {
    pub fn stream_index(&self, tag: &str) -> Option<usize> {
        self.streams.iter().position(|s| s.tag == tag)
    }

    /// Structural consistency: stream alignment, shapes, label ranges.
    pub fn validate(&self) -> Result<()> {
        if self.streams.is_empty() {
            return Err(Error::Validation("dataset has no streams".into()));
        }
        if self.class_count < 1 {
            return Err(Error::Validation("dataset class count is zero".into()));
        }
        for (i, sample) in self.samples.iter().enumerate() {
            if sample.label >= self.class_count {
                return Err(Error::Validation(format!(
                    "sample {i} label {} out of range ({} classes)",
                    sample.label, self.class_count
                )));
            }
            if sample.streams.len() != self.streams.len() {
                return Err(Error::Validation(format!(
                    "sample {i} has {} streams, expected {}",
                    sample.streams.len(),
                    self.streams.len()
                )));
            }
            for (spec, tensor) in self.streams.iter().zip(&sample.streams) {
                if tensor.shape() != [self.sequence_length, spec.frame_dim] {
                    return Err(Error::Validation(format!(
                        "sample {i} stream '{}' has shape {:?}, expected [{}, {}]",
                        spec.tag,
                        tensor.shape(),
                        self.sequence_length,
                        spec.frame_dim
                    )));
                }
            }
        }
        Ok(())
    }
}
