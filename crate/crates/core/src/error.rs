use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A joint coordinate lies on, outside, or within the boundary epsilon
    /// of its limit interval.
    #[error("joint {joint} at {value:.9} rad is outside the feasible space ({min:.6}, {max:.6})")]
    OutOfFeasibleSpace {
        joint: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("numerical divergence: non-finite state component")]
    NumericalDivergence,

    #[error("invalid manipulator model: {0}")]
    InvalidModel(String),

    #[error("invalid joint limits: {0}")]
    InvalidLimits(String),

    #[error("invalid control gains: {0}")]
    InvalidGains(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("at t = {t:.6} s: {source}")]
    AtTime { t: f64, source: Box<Error> },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Strips any timestamp context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_out_of_feasible_space(&self) -> bool {
        matches!(self.root(), Error::OutOfFeasibleSpace { .. })
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self.root(), Error::NumericalDivergence)
    }

    pub(crate) fn at(self, t: f64) -> Error {
        Error::AtTime {
            t,
            source: Box::new(self),
        }
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
