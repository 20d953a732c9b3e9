use thiserror::Error;

use crate::dynamics::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("frame matrix is singular at the evaluation point")]
    DegenerateFrame,

    #[error("metric block is degenerate and cannot be inverted")]
    DegenerateMetric,

    #[error("metric is not positive definite")]
    NotPositiveDefinite,

    #[error("syntax error at byte {offset}: expected one of [{}], found {found}", expected.join(", "))]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("constraints are linearly dependent")]
    DependentConstraints,

    #[error("malformed configuration: {0}")]
    Config(String),

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error("system is not Chaplygin: {0}")]
    NotChaplygin(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no positive-definite completion found (worst eigenvalue {0:e})")]
    CompletionFailed(f64),

    #[error("contraction one-form is not closed: path integrals differ by {0:e}")]
    NonIntegrable(f64),

    #[error("first integral is not positive on the working domain")]
    NotPositive,

    #[error("curve has zero length")]
    ZeroLength,

    #[error("invalid argument: {0}")]
    Invalid(String),
}
