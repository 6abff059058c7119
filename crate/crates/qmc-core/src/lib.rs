//! Simulation and analysis of time-inhomogeneous quantum Markov chains with
//! decoherence on finite state spaces.
//!
//! The model: a finite site space `{1, ..., m}`, a Hermitian generator `G`, a
//! schedule of unitaries `U_n = exp(i G / n^(zeta/2))` whose rotation angle
//! shrinks with the step index, and a per-step measurement probability `p`
//! realised by the Kraus family `{sqrt(1-p) I, sqrt(p) |i><i|}`. The crate
//! provides
//!
//! - exact density-operator evolution under the decoherent channel
//!   ([`model`]),
//! - the compound Markov chain representation: geometric measurement
//!   timelines, doubly stochastic transition matrices between measurements,
//!   a Monte Carlo estimator and an exact path enumerator ([`compound`]),
//! - classical inhomogeneous-product convergence certificates and unitary
//!   semigroup entry bounds ([`classical`]),
//! - periodicity prediction/detection and exponential/rational decay-rate
//!   regression with parameter sweeps ([`analysis`]),
//! - the dense complex linear algebra underneath ([`linalg`]),
//! - a cross-module property suite ([`verify`]).

pub mod analysis;
pub mod classical;
pub mod compound;
pub mod io;
pub mod linalg;
pub mod model;
pub mod verify;

/// Crate-wide error type.
///
/// [`Error::is_numerical`] distinguishes numerical failures (non-convergent
/// eigensolver or fit) from domain/configuration errors, which front ends map
/// to distinct exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("matrix is not Hermitian (max asymmetry {max_asymmetry:.3e})")]
    NotHermitian { max_asymmetry: f64 },
    #[error("matrix is not unitary (max deviation from U*U = I is {max_deviation:.3e})")]
    NotUnitary { max_deviation: f64 },
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:.3e})")]
    EighDidNotConverge { sweeps: usize, residual: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EighDidNotConverge { .. } | Error::DegenerateFit(_) | Error::FitFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
