use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure in {0}")]
    Numerical(String),

    /// A non-finite or non-invertible quantity appeared inside an estimator
    /// recursion. `step` names the recursion step that produced it.
    #[error("numerical divergence at step '{step}' (k = {index})")]
    Divergence { step: &'static str, index: usize },

    #[error("end of data: smoother window at k = {index} needs {needed} samples, {available} available")]
    EndOfData {
        index: usize,
        needed: usize,
        available: usize,
    },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("every candidate in the filter array diverged at k = {0}")]
    ArrayDivergence(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("channel file error: {0}")]
    ChannelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag used by the command-line tool.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Dimension(_) => "dimension",
            Error::Numerical(_) => "numerical",
            Error::Divergence { .. } => "divergence",
            Error::EndOfData { .. } => "end_of_data",
            Error::InvalidSchedule(_) => "invalid_schedule",
            Error::ArrayDivergence(_) => "array_divergence",
            Error::InvalidInput(_) => "invalid_input",
            Error::Config { .. } => "config",
            Error::ChannelFile(_) => "channel_file",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
