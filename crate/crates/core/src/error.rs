use std::path::PathBuf;

/// Coarse classification of [`Error`], used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Shape,
    Config,
    Contract,
    Input,
    Data,
    Decode,
    Format,
    Numerical,
    Divergence,
    Io,
}

impl ErrorKind {
    /// Stable snake_case identifier.
    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::Shape => "shape_error",
            ErrorKind::Config => "config_error",
            ErrorKind::Contract => "contract_error",
            ErrorKind::Input => "input_error",
            ErrorKind::Data => "data_error",
            ErrorKind::Decode => "decode_error",
            ErrorKind::Format => "format_error",
            ErrorKind::Numerical => "numerical_error",
            ErrorKind::Divergence => "training_divergence",
            ErrorKind::Io => "io_error",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("cannot decode {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },
    #[error("format error at offset {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: u64, detail: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Shape(_) => ErrorKind::Shape,
            Error::Config(_) => ErrorKind::Config,
            Error::Contract(_) => ErrorKind::Contract,
            Error::Input(_) => ErrorKind::Input,
            Error::Data(_) => ErrorKind::Data,
            Error::Decode { .. } => ErrorKind::Decode,
            Error::Format { .. } => ErrorKind::Format,
            Error::Numerical(_) => ErrorKind::Numerical,
            Error::Divergence { .. } => ErrorKind::Divergence,
            Error::Io { .. } => ErrorKind::Io,
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

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
pub(crate) use shape_err;
