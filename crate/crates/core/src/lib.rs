//! Phase-space stochastic thermodynamics of Gaussian quantum Brownian motion.
//!
//! A Fokker–Planck generator `∂ₜP = −∇·(A x P) + ½ ∇·B∇P` is stored as a
//! [`PhaseSpaceModel`]. From it the crate computes Gaussian steady states,
//! checks detailed balance, and evaluates the Wigner entropy, entropy
//! production rate and entropy flux. Master equations written in a small
//! Lindblad-term language are lowered to the same representation by
//! [`meqdsl`], which also certifies complete positivity.
//!
//! Data-parallel loops (ensemble simulation, tensor quadrature) run on rayon
//! when the `parallel` feature is enabled and fall back to plain iterators
//! otherwise. Results are bit-identical either way.

pub mod error;
pub mod exec;
pub mod linalg;
pub mod mcsim;
pub mod meqdsl;
pub mod phasespace;
pub mod quadrature;
pub mod steadystate;
pub mod thermo;

pub use error::{Error, Result};
pub use exec::Execution;
pub use phasespace::{
    build_model, decompose_time_reversal, irreversible_current_matrix, CurrentDecomposition,
    GaussianState, IrreversibleCurrent, ModelKind, PhaseSpaceModel, SystemParams,
    TimeReversalSignature,
};
pub use steadystate::{
    analyze_translation_invariant, check_detailed_balance, evolve_covariance, solve_lyapunov,
    DBReport, DbCondition,
};
pub use thermo::{
    entropy_flux_rate, entropy_production_rate, entropy_rate, epr_quadrature,
    epr_steady_paper_formula, thermo_sample, wigner_entropy, PaperSteadyInputs, ThermoSample,
};
