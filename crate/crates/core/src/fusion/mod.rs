//! Model-level fusion network: per-modality 1x1 convolution stacks,
//! feature concatenation, joint 2x2 convolutions and a linear
//! regression head trained with the mean-angular-distance loss.
//!
//! The graph is fixed, so gradients are hand-derived rather than pulled
//! from an autodiff framework. All arithmetic is f64; checkpoints store
//! f32 blobs.

mod checkpoint;
mod loss;
mod net;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use loss::{mad_loss, mad_loss_and_grad};
pub use net::{weight_init, Cache, FusionModel, Normalization, Tensors};
pub use train::{train, train_resume, AdamState, EpochStats, TrainConfig, TrainHistory};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("input shape {got:?} does not match the configured {want:?}")]
    ShapeMismatch { got: Vec<usize>, want: Vec<usize> },
    #[error("predicted vector {0} has near-zero norm")]
    ZeroPrediction(usize),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("user {0} appears in both train and validation sets")]
    SplitLeak(String),
}

/// Architecture description. Branch order is finger, eye, head,
/// matching the sample tensor's feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Temporal frames per sample.
    pub frames: usize,
    /// Features per modality branch (position + direction).
    pub branch_features: usize,
    /// Coordinates per feature; the channel axis of the convolutions.
    pub dims: usize,
    /// Feature maps of every convolutional layer.
    pub feature_maps: usize,
    /// Which modality branches exist. Single-modality ablations keep
    /// the architecture and zero out the absent branches' inputs.
    pub active_modalities: [bool; 3],
    /// Regression output dimension.
    pub output_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            frames: 36,
            branch_features: 2,
            dims: 3,
            feature_maps: 128,
            active_modalities: [true; 3],
            output_dim: 3,
        }
    }
}

impl NetworkConfig {
    pub fn with_feature_maps(mut self, maps: usize) -> Self {
        self.feature_maps = maps;
        self
    }

    pub fn with_modalities(mut self, active: [bool; 3]) -> Self {
        self.active_modalities = active;
        self
    }

    /// Total feature columns after concatenating the branches.
    pub fn concat_features(&self) -> usize {
        3 * self.branch_features
    }

    /// Spatial size after the two valid 2x2 joint convolutions.
    pub fn joint_out(&self) -> (usize, usize) {
        (self.frames - 2, self.concat_features() - 2)
    }

    pub fn flat_len(&self) -> usize {
        let (h, w) = self.joint_out();
        self.feature_maps * h * w
    }
}
