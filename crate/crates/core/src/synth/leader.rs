//! Synthesis from the leader's data alone.

use nalgebra::{Complex, DMatrix};

use super::noiseless::{initial_gain, riccati_from_data, solve_g};
use super::require_spd;
use crate::error::{CoreError, Result};
use crate::linalg::{inv_sqrt_spd, sigma_max};
use crate::plant::DataRecord;

#[derive(Debug, Clone)]
pub struct LeaderSynthesis {
    pub k0: DMatrix<f64>,
    pub p_mat: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    /// Minimum-norm `𝓜` with `[K₀; 0] = [U₋; X₋] 𝓜`.
    pub m: DMatrix<f64>,
    pub theta: f64,
}

/// `K₀`, `P`, `𝓜` and `θ = σ_max(Q^{-1/2} 𝓜ᵀX₊ᵀ P X₊𝓜 Q^{-1/2})`.
pub fn leader_gain(rec: &DataRecord, q: &DMatrix<f64>) -> Result<LeaderSynthesis> {
    let (gamma, k0) = initial_gain(rec, q)?;
    let p_mat = riccati_from_data(rec, &gamma, q)?;
    let m = solve_g(rec, &k0)?;
    require_spd(q, "Q")?;
    let qm = inv_sqrt_spd(q).ok_or(CoreError::NotPositiveDefinite("Q"))?;
    let xm = &rec.x_plus * &m;
    let theta = sigma_max(&(&qm * xm.transpose() * &p_mat * &xm * &qm));
    Ok(LeaderSynthesis { k0, p_mat, gamma, m, theta })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnclosingCircle {
    pub h0: f64,
    pub r0: f64,
    pub c0: f64,
    /// `r0/h0` at the chosen center.
    pub ratio: f64,
    /// `θ^{-1/2}`
    pub limit: f64,
}

impl EnclosingCircle {
    pub fn margin(&self) -> f64 {
        self.limit - self.ratio
    }
}

/// `max_k |λ_k − h| / h`.
pub fn circle_ratio(eigs: &[Complex<f64>], h: f64) -> f64 {
    eigs.iter().map(|l| (l - h).norm()).fold(0.0, f64::max) / h
}

const GOLDEN_TOL: f64 = 1e-10;

/// Real-axis center minimizing `r/h` over circles covering `eigs`.
pub fn best_center(eigs: &[Complex<f64>]) -> (f64, f64) {
    let scale = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let (mut lo, mut hi) = (1e-12 * scale, 10.0 * scale);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (circle_ratio(eigs, x1), circle_ratio(eigs, x2));
    while hi - lo > GOLDEN_TOL * scale.max(1.0) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = circle_ratio(eigs, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = circle_ratio(eigs, x2);
        }
    }
    let h = 0.5 * (lo + hi);
    (h, circle_ratio(eigs, h))
}

/// Smallest-ratio covering circle; succeeds iff the ratio is below `θ^{-1/2}`.
pub fn enclosing_circle(eigs: &[Complex<f64>], theta: f64) -> Result<EnclosingCircle> {
    let limit = if theta > 0.0 { theta.powf(-0.5) } else { f64::INFINITY };
    if eigs.is_empty() {
        return Err(CoreError::DimensionMismatch("empty spectrum".into()));
    }
    if eigs.iter().any(|l| l.re <= 0.0) {
        return Err(CoreError::CircleInfeasible { ratio: f64::INFINITY, limit });
    }
    let (h0, ratio) = best_center(eigs);
    if ratio >= limit {
        return Err(CoreError::CircleInfeasible { ratio, limit });
    }
    Ok(EnclosingCircle { h0, r0: ratio * h0, c0: 1.0 / h0, ratio, limit })
}

/// Initial gain and coupling tables, index 0 being the leader.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderGainTable {
    pub gains: Vec<DMatrix<f64>>,
    pub couplings: Vec<f64>,
}

pub fn leader_protocol_gains(k0: &DMatrix<f64>, c0: f64, followers: usize) -> LeaderGainTable {
    let mut gains = vec![DMatrix::zeros(k0.nrows(), k0.ncols()); followers + 1];
    gains[0] = k0.clone();
    let mut couplings = vec![0.0; followers + 1];
    couplings[0] = c0;
    LeaderGainTable { gains, couplings }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_spectrum() {
        let c = enclosing_circle(&[Complex::new(0.5, 0.0)], 1.0).unwrap();
        assert!((c.h0 - 0.5).abs() < 1e-8 && c.ratio < 1e-8 && (c.c0 - 2.0).abs() < 1e-7);
    }

    #[test]
    fn real_interval_center_is_midpoint() {
        let eigs = [Complex::new(0.7, 0.0), Complex::new(1.3, 0.0)];
        let c = enclosing_circle(&eigs, 0.9997).unwrap();
        assert!((c.h0 - 1.0).abs() < 1e-8 && (c.ratio - 0.3).abs() < 1e-9);
    }

    #[test]
    fn zero_theta_never_blocks() {
        let c = enclosing_circle(&[Complex::new(0.1, 0.0), Complex::new(1.9, 0.0)], 0.0).unwrap();
        assert!(c.limit.is_infinite());
    }
}
