//! Predictor combination: improving a target task predictor using only sample
//! evaluations of black-box reference predictors.
//!
//! The library measures how well a set of references can jointly predict the
//! target (its *predictability*, either by linear least squares or by Gaussian
//! process regression), then iteratively denoises the target by maximizing a
//! Rayleigh-quotient objective that blends fidelity to the current iterate with
//! that predictability. Per-reference relevance weights are learned by
//! marginal-likelihood optimization over a linear anisotropic kernel and scaled
//! onto the Gaussian kernel used for denoising.
//!
//! Modules:
//! - [`norm`]: evaluation vectors, centering/normalization onto the model
//!   manifold of zero-mean unit-norm predictors, and inverse normalization.
//! - [`kernel`]: Gram matrix construction for the supported kernels.
//! - [`predictability`]: linear and nonlinear predictability, GP posterior
//!   means, and the Nystrom low-rank factorization feeding the eigen-solver.
//! - [`relevance`]: automatic relevance determination over reference weights.
//! - [`denoise`]: the iterative denoising engine (target-only, joint,
//!   multi-class) plus the adapted pairwise baseline.
//! - [`bench`]: synthetic data generation, rank/classification metrics, and
//!   dataset file I/O.

pub mod bench;
pub mod denoise;
pub mod kernel;
pub(crate) mod linalg;
pub mod norm;
pub mod predictability;
pub mod relevance;

pub use denoise::{
    joint_denoise, multiclass_denoise, Algorithm, DenoiseConfig, DenoiseTrace, PredictorEnsemble,
};
pub use norm::{
    center, center_normalize, inverse_normalize, EvaluationVector, NormalizedPredictor,
    ReferenceMatrix, ScaleShift,
};

/// Errors surfaced by library operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vector has (near-)zero variance; a constant predictor cannot be normalized")]
    ZeroVariance,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("linear system is singular and could not be solved")]
    SingularSystem,
    #[error("GP noise variance must be strictly positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("basis count {requested} out of range [1, {max}]")]
    BasisCountOutOfRange { requested: usize, max: usize },
    #[error("relevance parameters overflowed the log-weight box constraint")]
    NumericalOverflow,
    #[error("denoising produced a degenerate (near-zero) target update")]
    DegenerateTarget,
    #[error("label {label} out of range [0, {classes})")]
    LabelOutOfRange { label: i64, classes: usize },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
