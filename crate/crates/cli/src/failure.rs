use std::fmt::Display;

use dpweights::Error;

pub const UNSATISFIED: u8 = 1;
pub const BUDGET_REFUSED: u8 = 2;
pub const USAGE: u8 = 64;
pub const DATA_FORMAT: u8 = 65;
pub const INTERNAL: u8 = 70;

/// An error together with the process exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn usage(msg: impl Display) -> Self {
        Self::new(USAGE, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl Display) -> Self {
        Self::new(DATA_FORMAT, anyhow::anyhow!("{msg}"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::BudgetExceeded { .. } => BUDGET_REFUSED,
            Error::InvalidParameter { .. }
            | Error::Domain(_)
            | Error::ComposedDeltaOverflow { .. }
            | Error::RdpOverflow { .. } => USAGE,
            Error::Parse { .. } | Error::LengthMismatch(_) | Error::Schema(_) | Error::Empty(_) => DATA_FORMAT,
            _ => INTERNAL,
        };
        Self::new(code, e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::new(INTERNAL, e)
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;
