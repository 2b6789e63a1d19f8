//! Serializable run report. Wall-clock timings are kept apart in
//! [`Timings`] so that the report itself is reproducible byte for byte.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::config::Mode;

/// Row-major matrix.
pub type Matrix = Vec<Vec<f64>>;

pub fn rows(m: &DMatrix<f64>) -> Matrix {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn complex_pairs(eigs: &[Complex<f64>]) -> Vec<[f64; 2]> {
    eigs.iter().map(|l| [l.re, l.im]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Converged,
    ToleranceUnmet,
    NotCertified,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Status {
    pub outcome: Outcome,
    pub exit_code: u8,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphReport {
    pub followers: usize,
    pub followers_connected: bool,
    /// Eigenvalues of `(I + D_ff)^{-1} L_ff` as `[re, im]`.
    pub l_bar_eigenvalues: Vec<[f64; 2]>,
    pub max_deviation_from_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmiReport {
    pub margin: f64,
    pub min_eigenvalue: f64,
    pub eps: f64,
    pub gamma: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentReport {
    /// Node index; 0 is the leader.
    pub node: usize,
    pub rank_ok: bool,
    pub k0: Option<Matrix>,
    /// Frobenius norm of `A + B K0` against the true plant.
    pub closed_loop_norm: Option<f64>,
    pub riccati: Option<Matrix>,
    pub are_residual: Option<f64>,
    pub lmi: Option<LmiReport>,
    pub error: Option<String>,
}

impl AgentReport {
    pub fn new(node: usize, rank_ok: bool) -> Self {
        Self { node, rank_ok, k0: None, closed_loop_norm: None, riccati: None, are_residual: None, lmi: None, error: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionReport {
    pub kind: String,
    pub bound: f64,
    /// `[a, b, c, d]` for a general input matrix.
    pub coefficients: Option<[f64; 4]>,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MareReport {
    pub mu: f64,
    pub delta: f64,
    pub iterations: usize,
    pub lambda: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiselessReport {
    pub region: Option<RegionReport>,
    pub o_gain: Option<Matrix>,
    /// Absent when there is nothing to synchronize (single follower).
    pub mare: Option<MareReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisyReport {
    pub alpha: f64,
    pub nu: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub robust_samples: usize,
    pub robust_certified: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderReport {
    pub theta: f64,
    pub h0: Option<f64>,
    pub r0: Option<f64>,
    pub c0: Option<f64>,
    pub ratio: f64,
    /// `θ^{-1/2}`; null when `θ = 0`.
    pub limit: Option<f64>,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeCheck {
    pub lambda: [f64; 2],
    pub schur: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub certified: bool,
    pub scale: f64,
    pub gain: Matrix,
    pub modes: Vec<ModeCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub horizon: usize,
    pub tolerance: f64,
    pub final_error: f64,
    pub settling_step: Option<usize>,
    pub final_gain_disagreement: f64,
    pub target_gain: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub mode: Mode,
    pub seed: u64,
    pub data_horizon: usize,
    pub status: Status,
    pub graph: GraphReport,
    pub agents: Vec<AgentReport>,
    pub noiseless: Option<NoiselessReport>,
    pub noisy: Option<NoisyReport>,
    pub leader: Option<LeaderReport>,
    pub certification: Option<CertificationReport>,
    pub simulation: Option<SimulationReport>,
    /// Files written by the run, relative to the output directory.
    pub manifest: Vec<String>,
}

/// Stage durations in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub collect: f64,
    pub synthesize: f64,
    pub certify: f64,
    pub simulate: f64,
    pub write: f64,
    pub total: f64,
}
