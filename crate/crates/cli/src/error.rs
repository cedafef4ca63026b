use rxpredict_core::model::ModelError;
use rxpredict_core::{AnalysisError, BaselineError, CorpusError, NdError, ParseError};
use thiserror::Error;

/// Command failure, grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    #[error("configuration error: {0}")]
    Config(String),
    /// Missing, unreadable or inconsistent input data (exit 2).
    #[error("data error: {0}")]
    Data(String),
    /// Training or analysis produced non-finite numbers (exit 3).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Data(_) => 2,
            Self::Numeric(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::Data(format!("{}: {e}", path.display()))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Data(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Data(format!("csv: {e}"))
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidSpec(_) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<NdError> for CliError {
    fn from(e: NdError) -> Self {
        match e {
            NdError::NonFinite(_) => Self::Numeric(e.to_string()),
            NdError::Checkpoint(_) => Self::Data(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numeric { .. } => Self::Numeric(e.to_string()),
            ModelError::Nd(nd) => nd.into(),
            ModelError::InvalidConfig(_) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Nd(nd) => nd.into(),
            BaselineError::InvalidConfig(_) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::NonFinite => Self::Numeric(e.to_string()),
            AnalysisError::BadPerplexity { .. } => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}
