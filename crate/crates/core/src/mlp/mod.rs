//! Data-driven distance regression on polar pair features.

mod features;
mod gradcheck;
mod model;
mod train;

pub use features::{angle_between, extract_feature, PairFeature};
pub use gradcheck::{gradient_check, relative_error, GradientCheck};
pub use model::{
    Activation, FeatureScaling, MlpModel, DEFAULT_LAYERS, MODEL_FORMAT, MODEL_VERSION,
};
pub use train::{train, EpochLoss, TrainConfig, TrainOutcome, TrainingSample};

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("training sample {0} is not finite")]
    NonFiniteSample(usize),
    #[error("training diverged at epoch {epoch} (loss {loss:e})")]
    DivergedTraining { epoch: usize, loss: f64 },
    #[error("model file {path}: {message}")]
    Io { path: String, message: String },
}

impl MlpError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        MlpError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
