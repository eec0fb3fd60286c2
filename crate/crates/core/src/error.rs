use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("connectivity error in cell {cell}: {message}")]
    Connectivity { cell: usize, message: String },

    #[error("geometry error in cell {cell}: {message}")]
    Geometry { cell: usize, message: String },

    #[error("singular local block in cell {cell} (condition estimate {condition:.3e})")]
    SingularLocalBlock { cell: usize, condition: f64 },

    #[error("linear solve failed at Oseen iteration {iteration}: {message}")]
    LinearSolve { iteration: usize, message: String },

    #[error("Oseen iteration did not converge in {iterations} iterations (last increment {last_increment:.3e})")]
    NotConverged {
        iterations: usize,
        last_increment: f64,
        history: Box<crate::solver::IterationHistory>,
    },

    #[error("level {level}: {source}")]
    AtLevel {
        level: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// The innermost error, looking through level annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLevel { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
