//! Dynamic sparse principal subspace estimation for high-dimensional
//! repeated-measurement data.
//!
//! At every time point `t` in `[0, 1]` the library estimates the subspace
//! spanned by the leading `d` eigenvectors of the covariance matrix of a
//! `p`-dimensional process, from `n` subjects observed with noise at
//! (possibly irregular) time points. Estimation combines local linear
//! kernel smoothing of the covariance with an l1-penalized trace
//! optimization on the Stiefel manifold, followed by a threshold-and-refit
//! step that screens out irrelevant variables.
//!
//! Module layout mirrors the pipeline:
//!
//! * [`kernel`] — kernel families and local linear weights
//! * [`smooth`] — panel data and smoothed mean/covariance estimates
//! * [`stiefel`] — orthonormal frames, l1 prox, exponential retraction
//! * [`manpg`] — manifold proximal gradient solver with semi-smooth Newton
//!   subproblem
//! * [`estimator`] — the two-step fit over an evaluation grid, subspace
//!   distance, dimension selection
//! * [`tuning`] — sequential cross-validated selection of `h`, `rho_t`,
//!   `gamma_t`
//! * [`sim`] — synthetic panel generator, error metrics, replication studies

pub mod estimator;
pub mod kernel;
pub mod manpg;
pub mod sim;
pub mod smooth;
pub mod stiefel;
pub mod tuning;

pub use estimator::{
    fit_trajectory, select_d_by_fve, subspace_distance, DpcaConfig, SubspaceFit,
};
pub use kernel::{KernelFamily, KernelSpec, LocalWeights};
pub use manpg::{manpg_solve, ManPgParams, SolveStatus, SolveTrace};
pub use sim::{generate_panel, run_study, SamplingDesign, SimDesign, StudyResult};
pub use smooth::{Design, PanelDataset, SmoothedCovariance, Subject};
pub use stiefel::StiefelPoint;
pub use tuning::{tune_sequential, TuningGrids, TuningReport};

/// Errors shared across the estimation pipeline.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Local window around `t` has fewer than two distinct points or a
    /// numerically singular local design; the bandwidth is too small there.
    #[error("degenerate smoothing window at t = {t}: {reason}")]
    DegenerateWindow { t: f64, reason: String },

    /// A common-design operation was invoked on irregular data.
    #[error("operation requires a common sampling design")]
    WrongDesign,

    /// Matrix or index dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix that must be symmetric is not, beyond tolerance.
    #[error("matrix is not symmetric (residual {residual:.3e})")]
    NotSymmetric { residual: f64 },

    /// A matrix expected to have orthonormal columns drifted too far to
    /// repair.
    #[error("matrix is not orthonormal (drift {drift:.3e} exceeds 1e-6)")]
    NotOrthonormal { drift: f64 },

    /// A direction violates the linearized Stiefel constraint at its anchor.
    #[error("tangent constraint violated (residual {residual:.3e})")]
    TangentViolation { residual: f64 },

    /// The proximal subproblem solver did not reach its residual tolerance.
    #[error("subproblem solver stalled (residual {residual:.3e} after {newton} Newton and {fixed_point} fixed-point iterations)")]
    SubproblemFail {
        residual: f64,
        newton: usize,
        fixed_point: usize,
    },

    /// Thresholding removed every variable.
    #[error("thresholding at gamma = {gamma} left an empty support")]
    EmptySupport { gamma: f64 },

    /// The retained support has fewer variables than the subspace dimension.
    #[error("support of size {support} is smaller than dimension {d}")]
    SupportTooSmall { support: usize, d: usize },

    /// An input claimed to be a projection matrix fails the idempotence or
    /// integer-trace checks.
    #[error("matrix is not a projection: {0}")]
    NotProjection(String),

    /// No positive eigenvalue available for explained-variance selection.
    #[error("spectrum has no positive eigenvalues")]
    DegenerateSpectrum,

    /// A fit and an evaluation grid do not agree.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Every tuning candidate failed its validity requirements.
    #[error("all tuning candidates failed")]
    AllCandidatesFailed,

    /// Invalid configuration or arguments.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Every grid point of a trajectory fit failed.
    #[error("no grid point could be fitted: {0}")]
    AllPointsFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
