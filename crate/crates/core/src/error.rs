use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the pricing, calibration and ingestion routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the function.
    #[error("{what} = {value} is outside its domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    /// A risk-neutral (or natural) step probability left (0, 1).
    #[error(
        "step {step}: probability {value} is outside (0, 1); \
         max admissible theta*sqrt(dt) is {max_theta_sqrt_dt:.6}"
    )]
    Regime {
        step: usize,
        value: f64,
        max_theta_sqrt_dt: f64,
    },

    /// A gross step factor is non-positive so node prices would be <= 0.
    #[error("step {step}: gross {which} factor {factor} is not positive")]
    Positivity {
        step: usize,
        which: &'static str,
        factor: f64,
    },

    /// No-arbitrage ordering u > growth > d does not hold.
    #[error("no-arbitrage violated: up {up}, growth {growth}, down {down}")]
    Arbitrage { up: f64, growth: f64, down: f64 },

    #[error("lattice horizon {lattice} does not match option maturity {maturity}")]
    MaturityMismatch { lattice: f64, maturity: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("pricing failed at {parameter} = {value}: {source}")]
    Pricing {
        parameter: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used by the command-line front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad or unreadable input data.
    Data,
    /// The model cannot be evaluated for the requested parameters.
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => ErrorKind::Data,
            _ => ErrorKind::Numerical,
        }
    }

    pub(crate) fn domain(what: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            expected,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
