use geoext_core::Error;

pub const OK: i32 = 0;
pub const INTERNAL: i32 = 1;
pub const INVALID: i32 = 2;
pub const RESIDUAL: i32 = 3;
pub const INTEGRATION: i32 = 4;

/// An error paired with its process exit code.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub error: anyhow::Error,
}

pub fn invalid(e: impl Into<anyhow::Error>) -> Outcome {
    Outcome {
        code: INVALID,
        error: e.into(),
    }
}

pub fn code_for(e: &Error) -> i32 {
    match e {
        Error::Syntax { .. }
        | Error::UnknownVariable(_)
        | Error::Config(_)
        | Error::UnknownSystem(_)
        | Error::UnknownParameter(_)
        | Error::DependentConstraints
        | Error::NotPositiveDefinite
        | Error::NotChaplygin(_)
        | Error::Unsupported(_)
        | Error::Invalid(_)
        | Error::DegenerateFrame
        | Error::DegenerateMetric
        | Error::NumericDomain(_) => INVALID,
        Error::Integration { .. } => INTEGRATION,
        Error::CompletionFailed(_) | Error::NonIntegrable(_) | Error::NotPositive | Error::ZeroLength => RESIDUAL,
    }
}

impl From<Error> for Outcome {
    fn from(e: Error) -> Self {
        Outcome {
            code: code_for(&e),
            error: e.into(),
        }
    }
}

impl From<std::io::Error> for Outcome {
    fn from(e: std::io::Error) -> Self {
        Outcome {
            code: INTERNAL,
            error: e.into(),
        }
    }
}
