use fisheye_distance::calibrate::FitError;
use fisheye_distance::camera::CameraError;
use fisheye_distance::dataset::DatasetError;
use fisheye_distance::mlp::MlpError;
use fisheye_distance::pipeline::PipelineError;
use fisheye_distance::synth::SynthError;
use fisheye_distance::AdjustError;
use thiserror::Error;

/// Failure classes, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl std::fmt::Display) -> Self {
        CliError::Data(msg.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CameraError> for CliError {
    fn from(e: CameraError) -> Self {
        match e {
            CameraError::DegenerateProjection { .. } | CameraError::NoPreimage { .. } => {
                CliError::Numeric(e.to_string())
            }
            CameraError::InvalidHeight { .. } => CliError::Usage(e.to_string()),
            CameraError::InvalidParams(_) | CameraError::Io { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<AdjustError> for CliError {
    fn from(e: AdjustError) -> Self {
        match e {
            AdjustError::AlphaOutOfRange(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Io { .. } => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<MlpError> for CliError {
    fn from(e: MlpError) -> Self {
        match e {
            MlpError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            MlpError::DivergedTraining { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        match e {
            PipelineError::Camera { source, .. } => match CliError::from(source) {
                CliError::Usage(_) => CliError::Usage(msg),
                CliError::Data(_) => CliError::Data(msg),
                CliError::Numeric(_) => CliError::Numeric(msg),
            },
            PipelineError::Adjust { source, .. } => match CliError::from(source) {
                CliError::Usage(_) => CliError::Usage(msg),
                _ => CliError::Numeric(msg),
            },
            PipelineError::Metrics(_) => CliError::Data(msg),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
