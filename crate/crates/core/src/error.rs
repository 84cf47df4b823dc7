use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Library-wide error type.
///
/// Variants are grouped by how a caller should react: `Io`/`Parse`/`Data`
/// mean the input is unusable, `Numerical`/`Degenerate` mean a computation
/// could not proceed on otherwise valid input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty cloud")]
    EmptyCloud,

    #[error("empty region")]
    EmptyRegion,

    #[error("k too large: k={k} but only {available} other points available")]
    KTooLarge { k: usize, available: usize },

    #[error("{0}")]
    InvalidArg(String),

    #[error("parameter ({u}, {v}) outside the surface domain")]
    OutOfDomain { u: f64, v: f64 },

    #[error("insufficient samples: {got} samples for {need} unknowns")]
    InsufficientSamples { got: usize, need: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArg(msg.into())
    }

    /// True for errors caused by bad input data (as opposed to numerical
    /// breakdown); the CLI maps these to distinct exit codes.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::Degenerate(_))
    }
}
