use thiserror::Error;

/// Errors raised by the analysis, bound, rate and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("n = {n} exceeds the cap of {cap} for {method}")]
    CapExceeded {
        method: &'static str,
        n: usize,
        cap: usize,
    },

    #[error("function is not square integrable under the Gaussian measure: {0}")]
    NonSquareIntegrable(String),

    #[error("coefficient summability fails numerically: {0}")]
    SummabilityViolation(String),

    #[error("metric {0} requires a density; the function is not declared 0-measure-preserving")]
    DensityRequired(&'static str),

    #[error("degenerate variance {0:e}; the normalized statistic is undefined")]
    DegenerateVariance(f64),

    #[error("covariance matrix is singular (min eigenvalue {min:e}, max eigenvalue {max:e})")]
    SingularCovariance { min: f64, max: f64 },

    #[error("parameters outside the covered regime: {0}")]
    OutOfRegime(String),

    #[error("alpha = {alpha} sits on the excluded boundary {boundary}; adjacent exponents {left} and {right}")]
    BoundaryCase {
        alpha: f64,
        boundary: f64,
        left: f64,
        right: f64,
    },

    #[error("linear function with Hermite rank 1: the statistic is exactly Gaussian")]
    ExactGaussian,

    #[error("Hurst index {0} >= 3/4: fluctuations are not Gaussian")]
    NonGaussianRegime(f64),

    #[error(
        "circulant embedding failed: most negative eigenvalue {most_negative:e} at size {size}"
    )]
    EmbeddingFailed { most_negative: f64, size: usize },

    #[error("rate fit requires positive values, got {0}")]
    NonPositiveValue(f64),

    #[error("function is constant: no active chaos up to order {0}")]
    ConstantFunction(u32),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by the caller's configuration rather than by a
    /// computation that failed on valid input.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::InvalidCovariance(_)
                | Error::DensityRequired(_)
                | Error::InvalidInput(_)
                | Error::CapExceeded { .. }
                | Error::OutOfRegime(_)
                | Error::BoundaryCase { .. }
                | Error::ExactGaussian
                | Error::NonGaussianRegime(_)
                | Error::Io(_)
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidInput(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
