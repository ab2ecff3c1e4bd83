//! Reconstruction of the initial temperature profile of the 1-D heat
//! equation from its final profile, by an averaged (Mann) fixed-point
//! iteration with discrepancy-principle stopping.
//!
//! The pieces:
//!
//! * [`spectral`] — truncated sine-eigenbasis coefficient vectors and the
//!   Sobolev norm scale; everything downstream is diagonal in this basis.
//! * [`heat`] — the forward semigroup e^{−Λ²T}, the exactly-inverted (and
//!   exponentially ill-posed) backward map, and the affine fixed-point
//!   operator T φ = φ − γ(e^{−Λ²T}φ − f) with its γ admissibility bounds.
//! * [`mann`] — the averaged iteration v_k = Σ_j a_{kj} x_j,
//!   x_{k+1} = 𝒯(v_k), in both the general lower-triangular-matrix form and
//!   the streaming segmenting form, with full run tracing.
//! * [`regularization`] — calibrated noise, residuals, discrepancy stopping,
//!   the per-step energy identity, logarithmic source conditions and rate
//!   fitting.

pub mod error;
pub mod heat;
pub mod mann;
pub mod regularization;
pub mod spectral;

pub use error::{Error, Result};
pub use heat::{
    backward_exact_oracle, forward_solve, gamma_bounds, tl_apply, AffineFixedPointOp, GammaBounds,
    HeatProblem,
};
pub use mann::{
    asymptotic_regularity_trace, mann_step_general, mann_step_segmenting, run_iteration, Driver,
    IterationState, MannMatrix, MannOperator, RegularityReport, RunOptions, RunRecord, RunRow,
    Schedule, StepInfo, StopReason, StopRule,
};
pub use regularization::{
    add_noise, discrepancy_index_bound, discrepancy_stop, energy_identity_check, log_source_filter,
    rate_fit, residual, seeded_source_element, source_condition_build, NoiseProfile, NoisyData,
    RateFit, RateModel, SourceCondition, SourceProblem, StoppingRule,
};
pub use spectral::{CoefVec, SpectralGrid};
