use std::process::ExitCode;

use condkit_core::anchoring::AnchorError;
use condkit_core::{ConditioningError, ConfigError, DepthError, MetricsError, PreprocessError, ShardError, StreamError};
use thiserror::Error;

/// Error classes, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config file or environment override.
    #[error("{0}")]
    Usage(String),
    /// Input data that is readable but invalid.
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
    /// An external command (LPIPS scorer) failed or is missing.
    #[error("{0}")]
    External(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io(_) => 4,
            CliError::External(_) => 5,
        })
    }

    pub fn io(context: impl std::fmt::Display, e: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ShardError> for CliError {
    fn from(e: ShardError) -> Self {
        match e {
            ShardError::IoFailure { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::Shard { source, shard_id } => match CliError::from(source) {
                CliError::Io(m) => CliError::Io(format!("shard {shard_id}: {m}")),
                other => CliError::Data(format!("shard {shard_id}: {other}")),
            },
            StreamError::InvalidOptions(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::ExternalUnavailable(_) | MetricsError::ExternalFailed { .. } | MetricsError::ParseFailure(_) => {
                CliError::External(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_errors!(ConditioningError, DepthError, PreprocessError, image::ImageError);

impl From<AnchorError> for CliError {
    fn from(e: AnchorError) -> Self {
        match e {
            AnchorError::InvalidConfig { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
