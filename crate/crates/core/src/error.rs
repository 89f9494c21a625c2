use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("joint spectral amplitude is not normalized (norm = {norm:.6e})")]
    NotNormalized { norm: f64 },

    #[error("frequency grids do not match: {0}")]
    GridMismatch(String),

    #[error(
        "delay {tau_ps} ps violates the sampling limit of the grid (|tau| must stay below {limit_ps:.4} ps)"
    )]
    Nyquist { tau_ps: f64, limit_ps: f64 },

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("curve has no usable plateau: {0}")]
    NoPlateau(String),

    #[error("curve is not a dip: {0}")]
    NotADip(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True when the error came from invalid user input rather than from the
    /// numerics or the filesystem.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::NotNormalized { .. }
                | Error::GridMismatch(_)
                | Error::Nyquist { .. }
                | Error::OutOfRange { .. }
                | Error::Empty(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
