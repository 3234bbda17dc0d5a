//! Off-the-grid recovery of spike trains from random Fourier measurements.
//!
//! A signal `x = sum_i a_i delta_{t_i}` on `R^d` is observed through `m`
//! Fourier samples `y = A x`. The crate provides:
//!
//! * [`measure`]: spike trains, the separation constraint and the merge
//!   projection used by projected gradient descent;
//! * [`fourier`]: frequency sampling, the measurement operator, correlations
//!   and gridded back-projection;
//! * [`lstsq`]: real-amplitude least squares and condition numbers;
//! * [`objective`]: the least-squares objective over all spike parameters
//!   and its gradient;
//! * [`comp`]: continuous orthogonal matching pursuit, with or without the
//!   sliding descent step;
//! * [`pgd`]: projected gradient descent with spike merging;
//! * [`experiment`]: the seeded synthetic benchmark and its exports.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! below name the double-precision instantiations used by the CLI.

// `!(x > 0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comp;
pub mod error;
pub mod experiment;
pub mod fourier;
mod linalg;
pub mod lstsq;
pub mod measure;
pub mod objective;
pub mod pgd;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use comp::{argmax_correlation, comp, CompConfig, CompTrace, SearchConfig, StopReason};
pub use fourier::{
    atom, back_project_grid, correlate, correlate_gradient, forward, sample_frequencies, FrequencySet,
    GridField, MeasurementVector,
};
pub use lstsq::{build_design, condition_number, solve_amplitudes, DesignMatrix, LsSolution};
pub use measure::{
    generate_signal, is_separated, merge_project, min_pairwise_distance, SeparationConstraint, SpikeTrain,
};
pub use objective::{finite_diff_gradient, gradient, objective, ParameterGradient};
pub use pgd::{pgd, pgd_step, PgdConfig, PgdTrace, StepMode, StepPolicy};

pub type SpikeTrain64 = SpikeTrain<f64>;
pub type SpikeTrain32 = SpikeTrain<f32>;
pub type FrequencySet64 = FrequencySet<f64>;
pub type FrequencySet32 = FrequencySet<f32>;
pub type MeasurementVector64 = MeasurementVector<f64>;
pub type MeasurementVector32 = MeasurementVector<f32>;
pub type GridField64 = GridField<f64>;
pub type CompConfig64 = CompConfig<f64>;
pub type PgdConfig64 = PgdConfig<f64>;
pub type ExperimentConfig64 = experiment::ExperimentConfig<f64>;
