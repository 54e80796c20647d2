//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by sequence construction, basis computation, extension
/// solves, conic solves, fitting, and the symmetry reductions.
#[derive(Debug, Error)]
pub enum Error {
    /// The requested group family does not support the requested operation
    /// (e.g. a continuous family where a finite one is required).
    #[error("unsupported group family: {0}")]
    UnsupportedGroup(String),

    /// A level index that the constructor tree cannot instantiate.
    #[error("invalid level: {0}")]
    InvalidLevel(String),

    /// The extension system at the target level has a nontrivial nullspace
    /// meeting the constraint fiber: the extension is not unique.
    #[error("extension to level {level} is not unique: {detail}")]
    NonUniqueExtension { level: usize, detail: String },

    /// The iterative least-squares solve hit its iteration cap without
    /// reaching the requested residual.
    #[error("least-squares solve diverged: {0}")]
    SolverDiverged(String),

    /// The conic solver returned a status we cannot interpret as a
    /// feasibility answer.
    #[error("conic solve indeterminate: {0}")]
    Indeterminate(String),

    /// The conic solver reported the program infeasible.
    #[error("conic program infeasible")]
    Infeasible,

    /// The conic solver reported the program unbounded.
    #[error("conic program unbounded")]
    Unbounded,

    /// The conic solver failed numerically.
    #[error("conic solver numerical failure")]
    NumericalFailure,

    /// A regression target that is not strictly positive.
    #[error("invalid regression target: {0}")]
    InvalidTarget(String),

    /// A fit was requested with an empty coefficient basis.
    #[error("empty coefficient basis")]
    EmptyBasis,

    /// Every restart of the alternating fit failed.
    #[error("all {0} restarts failed")]
    AllRestartsFailed(usize),

    /// Commutant sampling failed to produce usable eigenvalue gaps.
    #[error("degenerate commutant sample after {tries} resamples; an exact method is required")]
    DegenerateSample { tries: usize },

    /// Program data that is expected to be invariant is not.
    #[error("program data is not invariant: {0}")]
    NonInvariantData(String),

    /// A signomial support set that is not closed under the group action.
    #[error("support set is not invariant: {0}")]
    NonInvariantSupport(String),

    /// Dimension mismatch between operands.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Errors from parsing the text formats (config, description files,
    /// datasets, size expressions).
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
