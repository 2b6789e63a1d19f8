use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("negative weight {weight} at ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, weight: f64 },
    #[error("nonzero self-loop weight at node {0}")]
    NonZeroDiagonal(usize),
    #[error("leader (node 0) has incoming edges")]
    LeaderHasInEdges,
    #[error("follower subgraph is not symmetric at ({i}, {j})")]
    AsymmetricFollowers { i: usize, j: usize },
    #[error("eigenvalue computation failed: {0}")]
    EigenFailure(String),
    #[error("horizon {horizon} is shorter than n + p = {required}")]
    HorizonTooShort { horizon: usize, required: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("stacked data matrix has rank {rank}, need {required}")]
    RankDeficient { rank: usize, required: usize },
    #[error("invalid noise bound: {0}")]
    InvalidNoiseBound(String),
    #[error("synthesis infeasible: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("data not informative for consensus: {0}")]
    NotInformative(String),
    #[error("sub-dominant modulus {mu} of D_ff is not below one")]
    SubdominantModulusNotLessThanOne { mu: f64 },
    #[error("delta {delta} outside [mu, 1) with mu = {mu}")]
    DeltaOutOfRange { delta: f64, mu: f64 },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix F of the consensus region is not positive definite")]
    FNotPositiveDefinite,
    #[error("L_ff has non-positive eigenvalue {lambda_min}")]
    NonPositiveSpectrum { lambda_min: f64 },
    #[error("no enclosing circle: best ratio {ratio} is not below {limit}")]
    CircleInfeasible { ratio: f64, limit: f64 },
    #[error("Lyapunov equation is singular or has no positive-definite solution")]
    SingularLyapunov,
    #[error("{0} must be symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("malformed matrix file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Sdp(#[from] ddc_sdp::SdpError),
}

pub type Result<T> = std::result::Result<T, CoreError>;
