use thiserror::Error;

/// Errors raised by the estimator, the data layer and the command line.
#[derive(Debug, Error)]
pub enum MvrrError {
    #[error("block {block} has {found} rows, expected {expected}")]
    RowMismatch {
        block: usize,
        expected: usize,
        found: usize,
    },
    #[error("block {0} has no columns")]
    EmptyBlock(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("solver failed at lambda = {lambda:e}: {source}")]
    AtLambda {
        lambda: f64,
        #[source]
        source: Box<MvrrError>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, MvrrError>;

impl MvrrError {
    /// Process exit code for the command line: 2 for data problems, 3 for
    /// numerical failures, 1 for bad arguments.
    pub fn exit_code(&self) -> i32 {
        match self {
            MvrrError::Numerical(_) => 3,
            MvrrError::AtLambda { source, .. } => source.exit_code(),
            MvrrError::InvalidArgument(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn at_lambda(self, lambda: f64) -> Self {
        MvrrError::AtLambda {
            lambda,
            source: Box::new(self),
        }
    }
}
