use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature did not converge: {0}")]
    QuadratureDivergence(String),

    #[error("integrand has no finite limit at x = {endpoint}, which carries an atom")]
    SingularEndpoint { endpoint: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    #[error("measure has an atom at 1 (mass {0}); the criterion requires Lambda({{1}}) = 0")]
    AtomAtOne(f64),

    #[error("psi vanishes at q = {0}; the integral test is undefined")]
    DivisionNearZero(f64),

    #[error("all {0} replicates were censored at the horizon")]
    AllCensored(usize),

    #[error("expected {expected:.3e} events exceeds the per-run budget of {budget}")]
    RateOverflow { expected: f64, budget: usize },

    #[error("argument outside domain: {0}")]
    DomainError(String),

    #[error("grid too coarse: {0} distinct scales, need at least 3")]
    GridTooCoarse(usize),

    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),

    #[error("invalid scales: {0}")]
    InvalidScales(String),

    #[error("trajectory was not started with all particles at the origin")]
    WrongInitialization,

    #[error("trajectory was simulated without an event log")]
    MissingEventLog,

    #[error("time {0} is not on the trajectory's sampling grid")]
    TimeNotSampled(f64),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn out_of_range(what: &'static str, detail: impl Into<String>) -> Self {
        Error::OutOfRange {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_replicate(self, replicate: usize) -> Self {
        Error::Replicate {
            replicate,
            source: Box::new(self),
        }
    }
}
