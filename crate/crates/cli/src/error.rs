use std::path::PathBuf;

use corrnet::layout::LayoutError;
use corrnet::market_data::MarketDataError;
use corrnet::network::NetworkError;
use corrnet::rank_stats::StatsError;
use corrnet::render::RenderError;
use corrnet::returns::ReturnsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<dyn std::error::Error + Send + Sync>,
        code: u8,
    },
}

impl CliError {
    /// 2 usage, 3 data, 4 numeric or degenerate input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Read { .. } | CliError::Write { .. } | CliError::Format { .. } => 3,
            CliError::Stage { code, .. } => *code,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

fn stage(stage: &'static str, source: impl std::error::Error + Send + Sync + 'static, code: u8) -> CliError {
    CliError::Stage {
        stage,
        source: Box::new(source),
        code,
    }
}

impl From<MarketDataError> for CliError {
    fn from(e: MarketDataError) -> Self {
        stage("ingest", e, 3)
    }
}

impl From<ReturnsError> for CliError {
    fn from(e: ReturnsError) -> Self {
        stage("returns", e, 3)
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        let code = match e {
            StatsError::InvalidMatrix(_) => 3,
            _ => 4,
        };
        stage("correlation", e, code)
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        let code = match e {
            NetworkError::InvalidParameter(_) => 2,
            NetworkError::InvalidNetwork(_)
            | NetworkError::NodeSetMismatch
            | NetworkError::MissingLabel { .. }
            | NetworkError::LabelCsv { .. } => 3,
            _ => 4,
        };
        stage("network", e, code)
    }
}

impl From<LayoutError> for CliError {
    fn from(e: LayoutError) -> Self {
        let code = match e {
            LayoutError::InvalidParameter(_) => 2,
            LayoutError::EmptyNetwork => 4,
        };
        stage("layout", e, code)
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        stage("render", e, 3)
    }
}
