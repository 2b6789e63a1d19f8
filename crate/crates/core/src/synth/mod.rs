//! Gain synthesis from sampled data.
//!
//! * [`noiseless`]: per-agent gains, data-based Riccati solutions, the gain
//!   synchronization matrix and the consensus region.
//! * [`noisy`]: robust gains from noise-corrupted data via an S-procedure LMI.
//! * [`leader`]: gains computed by the leader alone plus the coupling gain.

pub mod leader;
pub mod noiseless;
pub mod noisy;

pub use leader::{best_center, circle_ratio, enclosing_circle, leader_gain, leader_protocol_gains, EnclosingCircle, LeaderGainTable, LeaderSynthesis};
pub use noiseless::{
    are_residual, consensus_region, gain_consensus_matrix, initial_gain, riccati_from_data, solve_g, solve_mare,
    synthesize_agent, verify_region, ConsensusRegion, MareGain, NoiselessSynthesis, RegionCoefficients, RegionKind,
};
pub use noisy::{informative_gain, MIN_LMI_MARGIN, noisy_lmi, sample_consistent_system, spectrum_gains, system_set, NoisySynthesis, SpectrumGains};

use ddc_sdp::{SdpSolution, SolveStatus};
use nalgebra::DMatrix;

use crate::error::{CoreError, Result};
use crate::linalg;
use crate::plant::DataRecord;

fn require_spd(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    let sym = (m - m.transpose()).amax() <= 1e-10 * m.amax().max(1.0);
    if !m.is_square() || !sym || linalg::min_symmetric_eigenvalue(m) <= 0.0 {
        return Err(CoreError::NotPositiveDefinite(what));
    }
    Ok(())
}

fn require_rank(rec: &DataRecord) -> Result<()> {
    let r = linalg::rank(&rec.stacked());
    let required = rec.n() + rec.p();
    if r < required {
        return Err(CoreError::RankDeficient { rank: r, required });
    }
    Ok(())
}

fn checked(sol: SdpSolution, what: &str) -> Result<SdpSolution> {
    match sol.status {
        SolveStatus::Optimal | SolveStatus::Feasible => Ok(sol),
        SolveStatus::Infeasible => Err(CoreError::Infeasible(format!("{what}: {}", sol.message))),
        SolveStatus::NumericalFailure => Err(CoreError::NumericalFailure(format!("{what}: {}", sol.message))),
    }
}

fn value(sol: &SdpSolution, name: &str) -> DMatrix<f64> {
    sol.value(name).cloned().expect("declared variable has a value")
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or_else(|| CoreError::NumericalFailure(format!("{what} is singular")))
}
