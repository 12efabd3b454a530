use thiserror::Error;

/// Every failure mode of the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("n_atoms must be at least 1")]
    NoAtoms,
    #[error("coupling g must be positive for a phase transition to exist")]
    ZeroCoupling,
    #[error("invalid spin subspace: {0}")]
    InvalidSubspace(String),
    #[error("dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("no convergence: residual {residual:e} above tolerance {tol:e}")]
    NoConvergence { residual: f64, tol: f64 },
    #[error("adaptive Fock cutoff {cutoff} passed the cap {cap}")]
    CutoffExceeded { cutoff: usize, cap: usize },
    #[error("steady state is not unique: {0}")]
    DegenerateSteadyState(String),
    #[error("Wigner grid too small: integral {integral}")]
    GridTruncation { integral: f64 },
    #[error("grids do not share axes")]
    GridMismatch,
    #[error("missing moments for 2S = {two_s}")]
    MissingSubspace { two_s: u32 },
    #[error("moments of 2S = {two_s} violate the cone <Sz>^2 <= <Sz^2> <= S^2")]
    MomentCone { two_s: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("null space of the coupling matrix is not one-dimensional")]
    NonUniqueNull,
    #[error("eigensolver failure: {0}")]
    SpectrumFailure(String),
    #[error("mean-field dynamics settled into a limit cycle (relative oscillation {amplitude:e})")]
    LimitCycle { amplitude: f64 },
    #[error("mean-field dynamics diverged at t = {time}")]
    Diverged { time: f64 },
    #[error("distribution is not unimodal")]
    Multimodal,
    #[error("distribution width {width:e} is below the grid spacing {spacing:e}")]
    DegenerateWidth { width: f64, spacing: f64 },
    #[error("power-law fit needs at least 3 positive points, got {0}")]
    TooFewPoints(usize),
    #[error("unknown figure id `{0}`")]
    UnknownFigure(String),
    #[error("resource cap: {0}")]
    ResourceCap(String),
    #[error("LAPACK: {0}")]
    Lapack(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Lapack(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
