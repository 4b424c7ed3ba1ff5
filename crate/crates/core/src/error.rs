use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed network document: {0}")]
    Format(String),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("null stoichiometric vector in reaction {0}")]
    NullStoichiometricVector(usize),
    #[error("nonpositive rate in reaction {0}")]
    NonpositiveRate(usize),
    #[error("no detailed-balance equilibrium (residual {residual:.3e})")]
    NoDetailedBalance { residual: f64 },
    #[error("negative state component {index}: {value}")]
    NegativeState { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("Legendre transform did not converge after {iterations} iterations (gradient norm {gradient:.3e})")]
    LegendreNonConvergence { iterations: usize, gradient: f64 },
    #[error("slow-manifold map infeasible for q (residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },
    #[error("{0}")]
    Numerical(String),
    #[error("face enumeration limited to {limit} species, network has {species}")]
    TooManySpecies { limit: usize, species: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
