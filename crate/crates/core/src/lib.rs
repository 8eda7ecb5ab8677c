//! Physically realizable adversarial interference for spectrogram classifiers.
//!
//! This crate simulates a 2D acoustic monitoring scenario end to end: a
//! piecewise-linear finite element discretization of the damped wave equation
//! on a rectangle, a leapfrog time stepper, precomputed source-to-receiver
//! Green operators, short-time Fourier analysis of the receiver trace, a small
//! convolutional classifier over dB spectrograms, and a constrained first-order
//! attack that synthesizes interference confined to a prescribed frequency
//! band.
//!
//! The expensive linear algebra happens once, up front: building the step
//! operators factors a single sparse matrix, and one adjoint recursion (one
//! triangular-solve sweep) yields the Green kernels for every source. After
//! that, attack objectives and gradients are convolutions and small dense
//! products — no sparse solves at all. [`solver::SolverCounters`] exposes
//! global counters so callers (and tests) can audit exactly that.
//!
//! Everything numeric is generic over [`Scalar`], implemented for `f32` and
//! `f64`; the `*64` aliases below pin the double-precision variants that the
//! command-line tools use.

pub mod attack;
pub mod classifier;
pub mod dense;
pub mod error;
pub mod fem;
pub mod geom;
pub mod green;
pub mod mesh;
pub mod noise;
pub mod scalar;
pub mod seeds;
pub mod solver;
pub mod sparse;
pub mod spectral;
pub mod wave;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use attack::{
    adjoint_gradient_oracle, run_attack, AttackConfig, AttackOutcome, AttackProblem, UpdateRule,
};
pub use classifier::{
    bce_loss, evaluate, normalization_stats, train, EpochLog, EvalReport, Example, Head,
    ModelParams, Prediction, TrainConfig,
};
pub use fem::{
    assemble_all, mollified_delta, mollifier_domain_integral, receiver_vector, receiver_weights,
    FemMatrices,
};
pub use geom::{Point2, Rect};
pub use green::{
    adjoint_recursion, build_green, precompute_adjoint_column, precompute_green_kernels,
    source_tag, AdjointColumn, GreenMode, GreenOperator,
};
pub use mesh::{build_rect_mesh, TriMesh};
pub use noise::{band_rms, corrupt_stft, noise_stft_realization, sample_time_noise, NoiseSpec};
pub use seeds::derive_seed;
pub use solver::SolverCounters;
pub use sparse::SparseSymMatrix;
pub use spectral::{
    build_projector, load_spectrogram_csv, power_db, save_spectrogram_csv, save_spectrogram_pgm,
    selector_residual, spectrogram_db, spectrogram_vjp, stft, stft_adjoint, BandSelector,
    NullspaceProjector, StftPlan,
};
pub use wave::{
    build_step_operators, cfl_estimate, energy_trace, leapfrog_solve, LeapfrogResult, Signal,
    SourcePath, SourceTerm, StepOperators, TimeGrid,
};

/// Double-precision aliases for the central types.
pub type TriMesh64 = mesh::TriMesh<f64>;
pub type Signal64 = wave::Signal<f64>;
pub type TimeGrid64 = wave::TimeGrid<f64>;
pub type StepOperators64 = wave::StepOperators<f64>;
pub type GreenOperator64 = green::GreenOperator<f64>;
pub type StftPlan64 = spectral::StftPlan<f64>;
pub type NullspaceProjector64 = spectral::NullspaceProjector<f64>;
pub type ModelParams64 = classifier::ModelParams<f64>;

/// Single-precision aliases, for callers trading accuracy for memory.
pub type TriMesh32 = mesh::TriMesh<f32>;
pub type Signal32 = wave::Signal<f32>;
pub type GreenOperator32 = green::GreenOperator<f32>;
pub type StftPlan32 = spectral::StftPlan<f32>;
pub type ModelParams32 = classifier::ModelParams<f32>;
