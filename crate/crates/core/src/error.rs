use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("gamma function pole at x = {0}")]
    Pole(f64),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("quadrature budget exceeded after {panels} panels (value {value:e}, error estimate {err:e})")]
    BudgetExceeded { value: f64, err: f64, panels: usize },

    #[error("non-finite integrand sample at x = {0}")]
    NonFinite(f64),

    #[error("quadrature failed at nesting level {level}: {source}")]
    AtLevel { level: usize, source: Box<Error> },

    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },

    #[error("supports overlap on [{0}, {1}]")]
    Overlap(f64, f64),

    #[error("spectral tail estimate {0:e} exceeds tolerance")]
    TailBound(f64),

    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("circulant embedding failed: eigenvalue {0:e} is significantly negative")]
    Embedding(f64),

    #[error("covariance matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-positive denominator {0:e}")]
    NonPositiveDenominator(f64),

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    pub fn at_level(self, level: usize) -> Error {
        Error::AtLevel { level, source: Box::new(self) }
    }

    /// Innermost error after stripping context and level tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLevel { source, .. } | Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self.root(),
            Error::InvalidParam(_)
                | Error::Overlap(..)
                | Error::Parse { .. }
                | Error::Config(_)
                | Error::Singular(_)
                | Error::Pole(_)
                | Error::TooFewSamples { .. }
                | Error::Dimension(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
