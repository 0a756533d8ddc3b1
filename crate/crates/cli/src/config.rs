//! Optional JSON/TOML file supplying defaults for command-line options.

use crate::error::{CliError, Result};
use fisheye_distance::mlp::TrainConfig;
use fisheye_distance::synth::{CrowdSpec, GridSpec};
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Every field is optional; flags given on the command line win.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub camera: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub correspondences: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Assumed person height for the geometric estimator, inches.
    pub height: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_visible: Option<f64>,
    pub alpha_occluded: Option<f64>,
    pub threshold: Option<f64>,
    pub image_side: Option<f64>,
    pub train: Option<TrainConfig>,
    pub grid_spec: Option<GridSpec>,
    pub crowd: Option<CrowdSpec>,
    pub pairs: Option<usize>,
    pub quantize: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| e.to_string()),
            Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
            _ => {
                return Err(CliError::usage(format!(
                    "config {}: expected a .json or .toml file",
                    path.display()
                )))
            }
        };
        parsed.map_err(|e| {
            CliError::usage(format!(
                "config {}: {}",
                path.display(),
                e.replace('\n', " ")
            ))
        })
    }
}
