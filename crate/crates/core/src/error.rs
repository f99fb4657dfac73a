use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular system (condition estimate {cond_estimate:.3e})")]
    Singular { cond_estimate: f64 },

    #[error("rank-deficient matrix: numerical rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual history {residual_history:?})")]
    NonConvergence {
        iterations: usize,
        residual_history: Vec<f64>,
    },

    #[error("time step {step} (t = {time:.6}) failed: {source}")]
    StepFailed {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid reduced order q = {q} (admissible 1..={max})")]
    InvalidOrder { q: usize, max: usize },

    #[error("relative information content undefined for all-zero singular values")]
    UndefinedRic,

    #[error("query {mu} outside sample interval [{lo}, {hi}]; extrapolation is not supported")]
    Extrapolation { mu: f64, lo: f64, hi: f64 },

    #[error("invalid interpolation weights: {0}")]
    InvalidWeights(String),

    #[error("tangent map undefined for sample {sample}: subspace too far from reference (sigma_min of V_ref^T V_k = {sigma_min:.3e})")]
    TangentMap { sample: usize, sigma_min: f64 },

    #[error("coincident parameter points in distance weighting")]
    CoincidentPoints,

    #[error("incompatible trajectories: {0}")]
    IncompatibleTrajectories(String),

    #[error("invalid volume curve: maximum volume {0} must be positive")]
    InvalidVolume(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("forward evaluation at mu = {mu:?} failed: {source}")]
    ForwardFailed {
        mu: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("Jacobian column {column} failed: {source}")]
    ColumnFailure {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the numerics rather than by bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Singular { .. }
            | Error::RankDeficient { .. }
            | Error::DegenerateGeometry(_)
            | Error::NonConvergence { .. }
            | Error::UndefinedRic
            | Error::TangentMap { .. }
            | Error::CoincidentPoints
            | Error::InvalidVolume(_) => true,
            Error::StepFailed { source, .. }
            | Error::ForwardFailed { source, .. }
            | Error::ColumnFailure { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
