//! Pipelines behind the `boxcov` command-line tool.

pub mod commands;
pub mod config;
pub mod system;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },

    #[error(transparent)]
    Core(#[from] boxcov::Error),

    #[error(transparent)]
    Model(#[from] boxcov::ModelError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for model blow-ups, 4 for empty
    /// coverings and 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        use boxcov::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { source, .. } => source.exit_code(),
            CliError::Core(E::InvalidInput(_) | E::DimensionMismatch { .. }) => 2,
            CliError::Core(E::Model(_) | E::Evaluation { .. }) | CliError::Model(_) => 3,
            CliError::Core(E::EmptyCovering(_)) => 4,
            _ => 1,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            CliError::Config(_) => self,
            other => CliError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
