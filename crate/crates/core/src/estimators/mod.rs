//! Sample moments, closed-form moment estimators, mean-form reconstruction,
//! the flip-flop algorithm and the unconstrained MLE.

pub mod flipflop;
pub mod mle;
pub mod mom;
pub mod reconstruct;
pub mod sample;

pub use flipflop::{flipflop, orient_to_sample, flipflop_from, procrustes_rotation, FlipFlopOptions, FlipFlopResult};
pub use mle::{mle_unconstrained, MleResult};
pub use mom::{
    estimate, estimate_dependent, estimate_dependent_exact, estimate_independent, estimate_with_constants,
    leading_coefficients, Branch, Diagnostics, EntryDiagnostic, EntryFailure, EstimatorCase, EstimatorOptions,
    LeadingCoefficients, MomEstimate, Root, RootRule,
};
pub use reconstruct::{fix_column_signs, reconstruct_mean_form, reconstruct_mean_form_truncated, Reconstruction};
pub use sample::{center_sample, gram_matrices, sample_moments, sample_moments_of, SampleMoments};
