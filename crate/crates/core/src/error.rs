use thiserror::Error;

use crate::domain::DomainReport;
use crate::scatter::ScatterResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// An `A` in P_{d+1} whose extracted scatter block is not positive definite.
    #[error("degenerate embedding: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("nu = {nu} is out of range (location-scatter requires nu > 1)")]
    NuOutOfRange { nu: f64 },

    #[error("law is outside the existence domain (a0 = {})", .0.a0)]
    DomainViolation(Box<DomainReport>),

    #[error("exact domain check too large ({work} subspace tests for d = {dim}); use the randomized check")]
    DomainCheckTooLarge { dim: usize, work: f64 },

    #[error("fixed-point iteration did not converge in {} iterations", .0.iterations)]
    MaxIterExceeded(Box<ScatterResult>),

    #[error("objective increased at iteration {iteration}: {before} -> {after}")]
    ObjectiveIncrease { iteration: usize, before: f64, after: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("no positive scale at mu = {mu}: mass {mass} at mu reaches nu/(nu+1)")]
    NoPositiveSolution { mu: f64, mass: f64 },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DomainViolation(_) => 2,
            Error::MaxIterExceeded(_)
            | Error::ObjectiveIncrease { .. }
            | Error::NumericalBreakdown(_)
            | Error::NotPositiveDefinite
            | Error::Degenerate(_) => 3,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::Degenerate(_) => "degenerate",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidSample(_) => "invalid_sample",
            Error::NuOutOfRange { .. } => "nu_out_of_range",
            Error::DomainViolation(_) => "domain_violation",
            Error::DomainCheckTooLarge { .. } => "domain_check_too_large",
            Error::MaxIterExceeded(_) => "max_iter_exceeded",
            Error::ObjectiveIncrease { .. } => "objective_increase",
            Error::NumericalBreakdown(_) => "numerical_breakdown",
            Error::NoPositiveSolution { .. } => "no_positive_solution",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}
