//! Simulation of two-photon generation from an incoherently pumped emitter
//! coupled to a doubly resonant cavity.
//!
//! The system is a two-level emitter (ground `|g>`, excited `|e>`) coupled to
//! two cavity modes: mode `a` at the atomic transition frequency omega_0
//! drives one-photon transitions with strength `g1`, and mode `b` at
//! omega_0/2 drives two-photon transitions through a `b^dag^2 sigma_- + h.c.`
//! coupling with strength `g2`. Incoherent pumping at rate `P`, cavity
//! outcoupling at rates `kappa1`, `kappa2` and free-space decay at rate
//! `gamma` make the system open; its dynamics follow a Lindblad master
//! equation. All rates and couplings are dimensionless, expressed in units
//! of `g1` (or of `g'` for the three-level microscopic model).
//!
//! The crate provides:
//!
//! - [`hilbert`]: the truncated product space `atom ⊗ mode_a ⊗ mode_b` and
//!   elementary operators on it;
//! - [`model`]: Hamiltonians (two- and three-level), collapse channels, the
//!   non-Hermitian effective Hamiltonian and the vectorized Liouvillian;
//! - [`steady`]: the steady-state solver, observables (efficiency, emission
//!   rates, photon statistics) and truncation-convergence control;
//! - [`analytic`]: closed-form manifold-approximation statistics, the reduced
//!   moment system, low-pump simplifications and the cascade-probability ODE
//!   oracle;
//! - [`trajectories`]: Monte Carlo wavefunction unraveling with jump records,
//!   cascade detection and efficiency estimation from jump statistics;
//! - [`spectra`]: two-time correlations via the quantum regression theorem
//!   and max-normalized emission spectra with dressed-state peak predictions;
//! - [`three_level`]: validation of the effective two-level model against the
//!   underlying three-level system (closed-evolution fidelity and steady-state
//!   percentage deviations).

// negated float comparisons are deliberate: they reject NaN during validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod hilbert;
pub mod model;
pub mod sparse;
pub mod spectra;
pub mod steady;
pub mod three_level;
pub mod trajectories;

use thiserror::Error;

/// Error classes shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("non-unique steady state: {0}")]
    NonUniqueSteadyState(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("convergence failure (drift {drift:.3e}): {message}")]
    ConvergenceFailure { drift: f64, message: String },
    #[error("step size too large: {0}")]
    StepSize(String),
    #[error("undefined estimate: {0}")]
    UndefinedEstimate(String),
    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use hilbert::{
    expectation, mode_annihilator, AtomLevel, DensityOperator, Operator, Slot, SpaceSpec,
    StateVector,
};
pub use model::{
    build_collapse_ops, build_collapse_ops_three_level, build_h_effective, build_h_three_level,
    build_h_two_level, build_liouvillian, effective_g2, transform_generator, CollapseChannel,
    CollapseOp, Frame, Liouvillian, ThreeLevelParams, TwoLevelParams,
};
pub use steady::{observables, solve_steady_state, truncation_convergence, SteadyReport};
