use hybridlift::Error as CoreError;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("missing stage `{stage}`: {reason}")]
    MissingStage { stage: &'static str, reason: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 0 ok, 1 usage, 2 data, 3 missing stage, 4 degenerate, 5 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::MissingStage { .. } => 3,
            CliError::Core(e) => match e {
                CoreError::InvalidArgument(_) => 1,
                CoreError::Io { .. }
                | CoreError::Parse { .. }
                | CoreError::Structure(_)
                | CoreError::Exposure { .. }
                | CoreError::DataGap { .. }
                | CoreError::Dimension(_)
                | CoreError::InsufficientHistory(_)
                | CoreError::Serde(_) => 2,
                CoreError::Degenerate(_) | CoreError::Domain(_) | CoreError::Rank(_) => 4,
                CoreError::Numeric(_)
                | CoreError::Iteration { .. }
                | CoreError::Training { .. }
                | CoreError::Regression(_)
                | CoreError::Scaling { .. } => 5,
            },
        }
    }

    pub fn write(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("cannot write {}: {e}", path.display()))
    }
}
