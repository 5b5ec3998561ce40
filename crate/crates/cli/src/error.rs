use thiserror::Error;

use tnid_core::analysis::AnalysisError;
use tnid_core::data::DataError;
use tnid_core::grad::GradError;
use tnid_core::model::ModelError;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("diverged: {0}")]
    Diverged(String),
}

impl CliError {
    /// 1 usage/config, 2 data, 3 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Diverged(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::DegreeSet(_) | ModelError::DegreeCapTooLarge { .. } | ModelError::InvalidDimensions(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GradError> for CliError {
    fn from(e: GradError) -> Self {
        match e {
            GradError::Diverged { .. } => CliError::Diverged(e.to_string()),
            GradError::Config(_) => CliError::Config(e.to_string()),
            GradError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Model(m) => m.into(),
            AnalysisError::Inconsistent { .. } | AnalysisError::NoRuns => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
