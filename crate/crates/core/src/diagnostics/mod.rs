//! Executable checks of the masking theory: the expected-loss regularizer and
//! its remainder, the one-step descent bound with effective smoothness, Hessian
//! conditioning, and alignment traces.

pub mod alignment;
pub mod descent;
pub mod regularizer;
pub mod spectrum;

pub use alignment::{alignment_trace, AlignmentSample, AlignmentWindow};
pub use descent::{descent_audit_step, DescentAudit, SmoothnessProfile};
pub use regularizer::{
    enumerate_masked_loss, enumerate_skip_expectation, expected_masked_loss_quadratic,
    fit_remainder_exponent, for_each_mask_outcome, masking_regularizer, monte_carlo_masked_loss,
    remainder_residuals, CubicPerturbed, Expectation, McEstimate, RegularizerReport,
    RemainderPoint, MAX_ENUMERATED_UNITS, MIN_MC_SAMPLES,
};
pub use spectrum::{
    robust_condition_from_eigenvalues, robust_condition_number, transformer_hessian, EIGEN_FLOOR,
};
