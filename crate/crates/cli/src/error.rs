use cdep_bounds::BoundsError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("overlap violation: {0}")]
    Overlap(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{context}: {source}")]
    Bounds {
        context: String,
        #[source]
        source: BoundsError,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
}

impl CliError {
    /// Process exit code: 2 validation, 3 overlap, 4 invariant breach.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Overlap(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Bounds {
                source: BoundsError::InvariantBreach(_),
                ..
            } => 4,
            _ => 2,
        }
    }

    pub fn bounds(context: impl Into<String>) -> impl FnOnce(BoundsError) -> CliError {
        let context = context.into();
        move |source| CliError::Bounds { context, source }
    }

    pub fn io(path: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
