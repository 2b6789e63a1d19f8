//! Noise-free localized synthesis.

use ddc_sdp::{AffineExpr, SdpProblem};
use nalgebra::{Complex, DMatrix};

use super::{checked, invert, require_rank, require_spd, value};
use crate::error::{CoreError, Result};
use crate::linalg::{self, inv_sqrt_spd, min_norm_solve, sigma_max, symmetrize, vstack};
use crate::netgraph::{RowStochasticDff, WeightedGraphMatrix};
use crate::plant::{DataRecord, Plant};

/// Per-agent result of the noise-free pipeline.
#[derive(Debug, Clone)]
pub struct NoiselessSynthesis {
    pub gamma: DMatrix<f64>,
    pub k0: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub p_mat: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// `Γ (X₋Γ)⁻¹`
    pub u_factor: DMatrix<f64>,
    /// `X₊ G`, equal to `B K(0)` on exact data.
    pub xg: DMatrix<f64>,
    /// `X₊ 𝒰 − X₊ G`, equal to `A` on exact data.
    pub w: DMatrix<f64>,
}

/// Minimizes `Tr(Q X₋Γ)` over the stability LMI and returns `(Γ, K(0))`.
pub fn initial_gain(rec: &DataRecord, q: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    require_rank(rec)?;
    let n = rec.n();
    if q.shape() != (n, n) {
        return Err(CoreError::DimensionMismatch(format!("Q is {}x{}, expected {n}x{n}", q.nrows(), q.ncols())));
    }
    require_spd(q, "Q")?;

    let mut prob = SdpProblem::new();
    let gamma = prob.matrix("Gamma", rec.horizon(), n)?;
    let s = gamma.expr().left_mul(&rec.x_minus)?;
    let s_sym = s.add(&s.transpose())?.scale(0.5);
    let xg = gamma.expr().left_mul(&rec.x_plus)?;
    let lmi = AffineExpr::block(vec![
        vec![s_sym.sub(&AffineExpr::identity(n))?, xg.clone()],
        vec![xg.transpose(), s_sym.clone()],
    ])?;
    prob.equal_zero("X-Gamma symmetric", s.sub(&s.transpose())?)?;
    prob.psd("stability", lmi)?;
    prob.psd("X-Gamma >= I", s_sym.sub(&AffineExpr::identity(n))?)?;
    prob.minimize(s_sym.left_mul(q)?.trace()?)?;
    let sol = checked(prob.solve()?, "initial gain")?;

    let gamma = value(&sol, "Gamma");
    let s = symmetrize(&(&rec.x_minus * &gamma));
    let k0 = &rec.u_minus * &gamma * invert(&s, "X-Gamma")?;
    Ok((gamma, k0))
}

/// Maximizes `Tr P` subject to `MᵀPM − P + Q ⪰ 0`, `P ⪰ 0` with `M = X₊Γ(X₋Γ)⁻¹`.
pub fn riccati_from_data(rec: &DataRecord, gamma: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = rec.n();
    let m = &rec.x_plus * gamma * invert(&(&rec.x_minus * gamma), "X-Gamma")?;
    let mut prob = SdpProblem::new();
    let p = prob.symmetric("P", n)?;
    let pe = p.expr();
    let lyap = pe.left_mul(&m.transpose())?.right_mul(&m)?.sub(&pe)?.add(&AffineExpr::named_constant("Q", q.clone()))?;
    prob.psd("Riccati", lyap)?;
    prob.psd("P >= 0", pe.clone())?;
    prob.maximize(pe.trace()?)?;
    let sol = checked(prob.solve()?, "Riccati program")?;
    Ok(symmetrize(&value(&sol, "P")))
}

/// Frobenius residual of `AᵀPA − AᵀPB(BᵀPB)⁻¹BᵀPA + Q − P` for the true plant.
pub fn are_residual(plant: &Plant, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let (a, b) = (&plant.a, &plant.b);
    let bpb = b.transpose() * p * b;
    let inv = bpb.clone().try_inverse().unwrap_or_else(|| linalg::pinv(&bpb));
    let apb = a.transpose() * p * b;
    (a.transpose() * p * a - &apb * inv * apb.transpose() + q - p).norm()
}

/// Minimum-norm `G` with `[K(0); 0] = [U₋; X₋] G`.
pub fn solve_g(rec: &DataRecord, k0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_rank(rec)?;
    if k0.shape() != (rec.p(), rec.n()) {
        return Err(CoreError::DimensionMismatch(format!("K is {}x{}", k0.nrows(), k0.ncols())));
    }
    let rhs = vstack(k0, &DMatrix::zeros(rec.n(), rec.n()));
    Ok(min_norm_solve(&rec.stacked(), &rhs))
}

/// Runs the three per-agent steps: initial gain, Riccati solution, `G`.
pub fn synthesize_agent(rec: &DataRecord, q: &DMatrix<f64>) -> Result<NoiselessSynthesis> {
    let (gamma, k0) = initial_gain(rec, q)?;
    let p_mat = riccati_from_data(rec, &gamma, q)?;
    let g = solve_g(rec, &k0)?;
    let u_factor = &gamma * invert(&(&rec.x_minus * &gamma), "X-Gamma")?;
    let xg = &rec.x_plus * &g;
    let w = &rec.x_plus * &u_factor - &xg;
    Ok(NoiselessSynthesis { gamma, k0, q: q.clone(), p_mat, g, u_factor, xg, w })
}

/// Gain synchronization matrix from the modified Riccati equation.
#[derive(Debug, Clone)]
pub struct MareGain {
    pub lambda_mat: DMatrix<f64>,
    pub r_tilde: DMatrix<f64>,
    pub q_tilde: DMatrix<f64>,
    pub delta: f64,
    pub o_gain: DMatrix<f64>,
    pub iterations: usize,
}

const MARE_TOL: f64 = 1e-10;
const MARE_MAX_ITER: usize = 100_000;

/// Fixed point of `Λ = Λ − (1−δ²)Λ(Λ+R̃)⁻¹Λ + Q̃` started from `Λ = Q̃`.
pub fn solve_mare(r_tilde: &DMatrix<f64>, q_tilde: &DMatrix<f64>, delta: f64) -> Result<(DMatrix<f64>, usize)> {
    require_spd(r_tilde, "R~")?;
    require_spd(q_tilde, "Q~")?;
    if r_tilde.shape() != q_tilde.shape() {
        return Err(CoreError::DimensionMismatch("R~ and Q~ differ in size".into()));
    }
    let k = 1.0 - delta * delta;
    let mut lam = q_tilde.clone();
    for it in 1..=MARE_MAX_ITER {
        let inv = invert(&(&lam + r_tilde), "Lambda + R~")?;
        let next = symmetrize(&(&lam - &lam * inv * &lam * k + q_tilde));
        let step = (&next - &lam).norm();
        lam = next;
        if !lam.iter().all(|v| v.is_finite()) || lam.norm() > 1e12 {
            return Err(CoreError::NoConvergence { iterations: it });
        }
        if step <= MARE_TOL * lam.norm().max(1.0) {
            return Ok((lam, it));
        }
    }
    Err(CoreError::NoConvergence { iterations: MARE_MAX_ITER })
}

/// `𝒪 = −(Λ+R̃)⁻¹Λ` with `δ` defaulting to `(μ+1)/2`.
pub fn gain_consensus_matrix(
    dff: &RowStochasticDff,
    r_tilde: &DMatrix<f64>,
    q_tilde: &DMatrix<f64>,
    delta: Option<f64>,
) -> Result<MareGain> {
    let mu = dff.mu;
    if mu >= 1.0 {
        return Err(CoreError::SubdominantModulusNotLessThanOne { mu });
    }
    let delta = delta.unwrap_or((mu + 1.0) / 2.0);
    if !(mu..=1.0).contains(&delta) {
        return Err(CoreError::DeltaOutOfRange { delta, mu });
    }
    let (lambda_mat, iterations) = solve_mare(r_tilde, q_tilde, delta)?;
    let o_gain = -invert(&(&lambda_mat + r_tilde), "Lambda + R~")? * &lambda_mat;
    Ok(MareGain { lambda_mat, r_tilde: r_tilde.clone(), q_tilde: q_tilde.clone(), delta, o_gain, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    InvertibleB,
    GeneralB,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone)]
pub struct ConsensusRegion {
    pub kind: RegionKind,
    /// `1/σ_max(ℱ^{-1/2} ℛ ℱ^{-1/2})`; infinite when `ℛ = 0`.
    pub bound: f64,
    pub coeffs: Option<RegionCoefficients>,
    pub r: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub w: Vec<DMatrix<f64>>,
    pub p_total: DMatrix<f64>,
}

impl ConsensusRegion {
    pub fn contains(&self, eta: Complex<f64>) -> bool {
        match (self.kind, self.coeffs) {
            (RegionKind::GeneralB, Some(c)) => {
                let m = eta.norm();
                c.a * (eta - 1.0).norm_sqr() + c.b * m * m + c.c * m + c.d <= 1.0
            }
            _ => (eta - 1.0).norm_sqr() < self.bound,
        }
    }
}

/// Aggregates per-agent results into the data-based consensus region.
pub fn consensus_region(agents: &[NoiselessSynthesis], invertible_b: bool) -> Result<ConsensusRegion> {
    let first = agents.first().ok_or_else(|| CoreError::DimensionMismatch("no agents".into()))?;
    let n = first.p_mat.nrows();
    if agents.iter().any(|a| a.p_mat.nrows() != n || a.w.shape() != (n, n) || a.xg.shape() != (n, n)) {
        return Err(CoreError::DimensionMismatch("agents disagree on state dimension".into()));
    }
    let p_total = agents.iter().fold(DMatrix::zeros(n, n), |acc, a| acc + &a.p_mat);
    let mut r = DMatrix::zeros(n, n);
    let mut f = DMatrix::zeros(n, n);
    for a in agents {
        let rest = &p_total - &a.p_mat;
        r += a.xg.transpose() * &a.p_mat * &a.xg + a.w.transpose() * &rest * &a.w;
        f += &a.q + &rest;
    }
    let f = symmetrize(&f);
    let r = symmetrize(&r);
    let fm = inv_sqrt_spd(&f).ok_or(CoreError::FNotPositiveDefinite)?;
    let scaled = |m: &DMatrix<f64>| sigma_max(&(&fm * m * &fm));
    let s = scaled(&r);
    let bound = if s > 0.0 { 1.0 / s } else { f64::INFINITY };

    let coeffs = (!invertible_b).then(|| {
        let mut ma = DMatrix::zeros(n, n);
        let mut mb = DMatrix::zeros(n, n);
        let mut mc = DMatrix::zeros(n, n);
        let mut md = DMatrix::zeros(n, n);
        for (i, ai) in agents.iter().enumerate() {
            let rest = &p_total - &ai.p_mat;
            ma += ai.xg.transpose() * &ai.p_mat * &ai.xg;
            mb += ai.xg.transpose() * &rest * &ai.xg;
            md += ai.w.transpose() * &rest * &ai.w;
            for (j, aj) in agents.iter().enumerate() {
                if i != j {
                    mc += aj.xg.transpose() * &aj.p_mat * &ai.xg + ai.xg.transpose() * &ai.p_mat * &aj.xg;
                }
            }
        }
        RegionCoefficients { a: scaled(&ma), b: scaled(&mb), c: scaled(&mc), d: scaled(&md) }
    });
    Ok(ConsensusRegion {
        kind: if invertible_b { RegionKind::InvertibleB } else { RegionKind::GeneralB },
        bound,
        coeffs,
        r,
        f,
        w: agents.iter().map(|a| a.w.clone()).collect(),
        p_total,
    })
}

/// True iff every eigenvalue of `L̄` lies in the region.
pub fn verify_region(wgm: &WeightedGraphMatrix, region: &ConsensusRegion) -> bool {
    wgm.eigenvalues.iter().all(|l| region.contains(*l))
}
