//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by lattice construction, validation, and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}x{0} (L={1}) vs {2}x{2} (L={3})")]
    GridMismatch(usize, f64, usize, f64),

    #[error("covariance spectrum invalid: {0}")]
    InvalidSpectrum(String),

    #[error("potential decay violation at site {site:?} (|x|={radius:.3}): {detail}")]
    DecayViolation {
        site: [usize; 3],
        radius: f64,
        detail: String,
    },

    #[error("eigenvalue {omega:.6} is within {margin:.2e} of a threshold ±{mass}")]
    NearThreshold { omega: f64, margin: f64, mass: f64 },

    #[error("time step {dt} does not divide evolution time {t}")]
    BadTimeStep { t: f64, dt: f64 },

    #[error("time {t} exceeds the pre-recurrence window {window}")]
    OutsideWindow { t: f64, window: f64 },

    #[error("ensemble is empty or too small: {0}")]
    EmptyEnsemble(String),

    #[error("eigensolver failed to converge: {0}")]
    NoConvergence(String),

    #[error("quadrature integrand does not decay over the window (slope {slope:.3})")]
    NonDecayingIntegrand { slope: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
