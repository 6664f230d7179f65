//! Training and evaluation: the SGD recipe (momentum, weight decay,
//! polynomial learning-rate decay), the softmax classifier loss, synthetic
//! set-identification data, the three-stage pipeline, open-set metrics, and
//! artifact serialization.

pub mod eval;
pub mod io;
pub mod loss;
pub mod optimizer;
pub mod pipeline;
pub mod synth;

pub use eval::{evaluate_open_set, OpenSetMetrics};
pub use loss::softmax_cross_entropy;
pub use optimizer::{poly_lr, sgd_momentum_step, OptimizerConfig};
pub use pipeline::{train_three_stage, ModelBundle, StageSchedule};
pub use synth::{synth_generate, SynthConfig};

use serde::{Deserialize, Serialize};

/// One labeled video: an ordered list of raw frame vectors. Frame count may
/// vary between videos; the fixed-length contract is restored by resampling
/// at training and evaluation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Video {
    pub label: String,
    pub frames: Vec<Vec<f64>>,
}

impl Video {
    /// Raw frame dimension; every frame of a valid video agrees.
    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

/// An ordered collection of videos.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub videos: Vec<Video>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    /// Unique labels in sorted order: the canonical class indexing used by
    /// classifiers and metrics, independent of video order.
    pub fn labels_sorted(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.videos.iter().map(|v| v.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// Validates nonemptiness, per-video uniform frame dimension, shared
    /// dimension across videos, and finiteness.
    pub fn validate(&self) -> crate::Result<()> {
        use crate::error::Error;
        if self.videos.is_empty() {
            return Err(Error::EmptyInput("Dataset"));
        }
        let dim = self.videos[0].dim();
        for (i, v) in self.videos.iter().enumerate() {
            if v.frames.is_empty() {
                return Err(Error::EmptyInput("Dataset: video without frames"));
            }
            for f in &v.frames {
                if f.len() != dim {
                    return Err(Error::ShapeMismatch {
                        context: "Dataset::validate",
                        expected: format!("frames of length {dim}"),
                        found: format!("{} in video {i}", f.len()),
                    });
                }
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("Dataset::validate"));
                }
            }
        }
        Ok(())
    }
}
