//! Inter-person distance estimation from a single overhead fisheye camera.
//!
//! Detections are mapped to the floor either geometrically, through the
//! inverse of a unified spherical camera model with an assumed person height,
//! or by a small regressor trained on a synthetic calibration grid. Bounding
//! box centers can be nudged toward the image center first to compensate for
//! occlusion and height mismatch.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjust;
pub mod calibrate;
pub mod camera;
pub mod dataset;
pub mod geometry;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod synth;

pub use adjust::{adjust, adjust_pair, AdjustError, Adjustment, BoundingBox};
pub use calibrate::{fit_params, Correspondence, Fit, FitError, FitOptions, FitReport};
pub use camera::{inverse_project, project, CameraError, CameraParams, PixelPoint, WorldPoint};
pub use dataset::{load_dataset, Dataset, DatasetError};
pub use geometry::{batch_distances, estimate_distance, DistanceMatrix, LocalizedPerson};
pub use metrics::{EvalReport, PairCategory, PairResult, VIOLATION_THRESHOLD_IN};
pub use mlp::{MlpError, MlpModel, TrainConfig};
pub use pipeline::{evaluate_pipeline, Estimator, PipelineError};
pub use synth::{generate_grid, generate_scene, GridSpec, SynthError, VirtualPerson};
