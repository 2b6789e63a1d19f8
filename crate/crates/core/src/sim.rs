//! Closed-loop simulation of the three protocols and Schur certification.

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::linalg::symmetrize;
use crate::netgraph::NetworkGraph;
use crate::plant::Plant;

pub const DEFAULT_HORIZON: usize = 500;
pub const CONSENSUS_TOL: f64 = 1e-3;

/// Time series of one closed-loop run. Agent index 0 is the leader.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// `states[t][i]`, `t = 0..=horizon`.
    pub states: Vec<Vec<DVector<f64>>>,
    /// `gains[t][i]` for followers only (`i = 0` is follower 1).
    pub gains: Vec<Vec<DMatrix<f64>>>,
    /// `couplings[t][i]` for followers; empty unless the leader-only protocol ran.
    pub couplings: Vec<Vec<f64>>,
    /// `inputs[t][i]`, `t = 0..horizon`, leader included.
    pub inputs: Vec<Vec<DVector<f64>>>,
    pub consensus_error: Vec<f64>,
    pub gain_disagreement: Vec<f64>,
    pub target_gain: DMatrix<f64>,
}

impl Trace {
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn agents(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn final_error(&self) -> f64 {
        self.consensus_error.last().copied().unwrap_or(0.0)
    }

    /// First time step with `e(t) < tol` that stays below it afterwards.
    pub fn settling_step(&self, tol: f64) -> Option<usize> {
        let mut k = self.consensus_error.len();
        while k > 0 && self.consensus_error[k - 1] < tol {
            k -= 1;
        }
        (k < self.consensus_error.len()).then_some(k)
    }
}

enum Law<'a> {
    Noiseless { o_gain: &'a DMatrix<f64> },
    Noisy { alpha: f64 },
    Leader,
}

fn consensus_error(xs: &[DVector<f64>]) -> f64 {
    xs[1..].iter().map(|x| (x - &xs[0]).norm()).fold(0.0, f64::max)
}

fn disagreement(ks: &[DMatrix<f64>], target: &DMatrix<f64>) -> f64 {
    ks[1..].iter().map(|k| (k - target).norm()).fold(0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn run(
    plant: &Plant,
    graph: &NetworkGraph,
    x0s: &[DVector<f64>],
    horizon: usize,
    mut ks: Vec<DMatrix<f64>>,
    mut cs: Option<Vec<f64>>,
    target: DMatrix<f64>,
    law: Law,
) -> Result<Trace> {
    let agents = graph.followers() + 1;
    let (n, p) = (plant.n(), plant.p());
    if x0s.len() != agents || x0s.iter().any(|x| x.len() != n) {
        return Err(CoreError::DimensionMismatch(format!("need {agents} initial states of length {n}")));
    }
    if ks.len() != agents || ks.iter().any(|k| k.shape() != (p, n)) {
        return Err(CoreError::DimensionMismatch(format!("need {agents} gains of shape {p}x{n}")));
    }
    let a = &graph.adjacency;
    let w = |i: usize, j: usize| a[(i, j)] / (1.0 + graph.degrees[i]);

    let mut xs = x0s.to_vec();
    let mut trace = Trace {
        states: Vec::with_capacity(horizon + 1),
        gains: Vec::with_capacity(horizon + 1),
        couplings: Vec::new(),
        inputs: Vec::with_capacity(horizon),
        consensus_error: Vec::with_capacity(horizon + 1),
        gain_disagreement: Vec::with_capacity(horizon + 1),
        target_gain: target.clone(),
    };
    let record = |trace: &mut Trace, xs: &[DVector<f64>], ks: &[DMatrix<f64>], cs: &Option<Vec<f64>>| {
        trace.consensus_error.push(consensus_error(xs));
        trace.gain_disagreement.push(disagreement(ks, &trace.target_gain));
        trace.states.push(xs.to_vec());
        trace.gains.push(ks[1..].to_vec());
        if let Some(c) = cs {
            trace.couplings.push(c[1..].to_vec());
        }
    };
    record(&mut trace, &xs, &ks, &cs);

    for _ in 0..horizon {
        let mut us = vec![DVector::zeros(p); agents];
        for i in 1..agents {
            let mut s = DVector::zeros(n);
            for j in 0..agents {
                if a[(i, j)] != 0.0 {
                    let coef = match law {
                        Law::Noiseless { .. } => w(i, j),
                        Law::Noisy { alpha } => alpha * a[(i, j)],
                        Law::Leader => cs.as_ref().map_or(0.0, |c| c[i]) * w(i, j),
                    };
                    s += (&xs[i] - &xs[j]) * coef;
                }
            }
            us[i] = &ks[i] * s;
        }
        let next_x: Vec<DVector<f64>> = xs.iter().zip(&us).map(|(x, u)| plant.step(x, u)).collect();

        let mut next_k = ks.clone();
        let mut next_c = cs.clone();
        for i in 1..agents {
            match law {
                Law::Noiseless { o_gain } => {
                    let mut s = DMatrix::zeros(p, n);
                    for j in 1..agents {
                        if a[(i, j)] != 0.0 {
                            s += (&ks[i] - &ks[j]) * (a[(i, j)] / (1.0 + graph.z));
                        }
                    }
                    next_k[i] += o_gain * s;
                }
                Law::Noisy { .. } | Law::Leader => {
                    for j in 0..agents {
                        if a[(i, j)] != 0.0 {
                            next_k[i] += (&ks[j] - &ks[i]) * w(i, j);
                            if let (Some(nc), Some(c)) = (next_c.as_mut(), cs.as_ref()) {
                                nc[i] += w(i, j) * (c[j] - c[i]);
                            }
                        }
                    }
                }
            }
        }
        trace.inputs.push(us);
        xs = next_x;
        ks = next_k;
        cs = next_c;
        record(&mut trace, &xs, &ks, &cs);
    }
    Ok(trace)
}

/// Protocol with gain synchronization through `𝒪`; the target gain is the
/// mean of the followers' initial gains. `gains` lists followers only.
pub fn run_noiseless_protocol(
    plant: &Plant,
    graph: &NetworkGraph,
    gains: &[DMatrix<f64>],
    o_gain: &DMatrix<f64>,
    x0s: &[DVector<f64>],
    horizon: usize,
) -> Result<Trace> {
    if gains.is_empty() || o_gain.shape() != (plant.p(), plant.p()) {
        return Err(CoreError::DimensionMismatch("follower gains or O have the wrong size".into()));
    }
    let target = gains.iter().fold(DMatrix::zeros(plant.p(), plant.n()), |acc, k| acc + k) / gains.len() as f64;
    let mut ks = vec![target.clone()];
    ks.extend_from_slice(gains);
    run(plant, graph, x0s, horizon, ks, None, target, Law::Noiseless { o_gain })
}

/// Protocol with coupling `α`; `gains` includes the leader's gain at index 0,
/// which stays fixed and is the target.
pub fn run_noisy_protocol(
    plant: &Plant,
    graph: &NetworkGraph,
    gains: &[DMatrix<f64>],
    alpha: f64,
    x0s: &[DVector<f64>],
    horizon: usize,
) -> Result<Trace> {
    let target = gains.first().cloned().ok_or_else(|| CoreError::DimensionMismatch("no gains".into()))?;
    run(plant, graph, x0s, horizon, gains.to_vec(), None, target, Law::Noisy { alpha })
}

/// Protocol where gains and couplings are both broadcast from the leader.
pub fn run_leader_protocol(
    plant: &Plant,
    graph: &NetworkGraph,
    gains: &[DMatrix<f64>],
    couplings: &[f64],
    x0s: &[DVector<f64>],
    horizon: usize,
) -> Result<Trace> {
    let target = gains.first().cloned().ok_or_else(|| CoreError::DimensionMismatch("no gains".into()))?;
    if couplings.len() != gains.len() {
        return Err(CoreError::DimensionMismatch("one coupling per agent required".into()));
    }
    run(plant, graph, x0s, horizon, gains.to_vec(), Some(couplings.to_vec()), target, Law::Leader)
}

/// Solves `FᵀPF − P = −I` through the vectorized linear system and checks `P ≻ 0`.
pub fn lyapunov_certificate(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !f.is_square() {
        return Err(CoreError::NonSquare { rows: f.nrows(), cols: f.ncols() });
    }
    let n = f.nrows();
    let ft = f.transpose();
    let lhs = DMatrix::identity(n * n, n * n) - ft.kronecker(&ft);
    let sv = lhs.singular_values();
    if sv.min() <= 1e-12 * sv.max() {
        return Err(CoreError::SingularLyapunov);
    }
    let rhs = DMatrix::<f64>::identity(n, n);
    let vec_p = lhs.lu().solve(&DVector::from_column_slice(rhs.as_slice())).ok_or(CoreError::SingularLyapunov)?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let asym = (&p - p.transpose()).amax();
    if asym > 1e-8 * p.amax().max(1.0) {
        return Err(CoreError::SingularLyapunov);
    }
    let p = symmetrize(&p);
    if p.clone().cholesky().is_none() {
        return Err(CoreError::SingularLyapunov);
    }
    Ok(p)
}

pub fn is_schur(f: &DMatrix<f64>) -> bool {
    match lyapunov_certificate(f) {
        Ok(_) => true,
        Err(e) => {
            log::debug!("not Schur: {e}");
            false
        }
    }
}

/// Real `2n × 2n` embedding `[[Re, −Im], [Im, Re]]` of a complex matrix.
pub fn real_embedding(re: &DMatrix<f64>, im: &DMatrix<f64>) -> DMatrix<f64> {
    let n = re.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(re);
    m.view_mut((0, n), (n, n)).copy_from(&(-im));
    m.view_mut((n, 0), (n, n)).copy_from(im);
    m.view_mut((n, n), (n, n)).copy_from(re);
    m
}

/// `A + scale·λ·B·K` for one mode, embedded in real arithmetic when `λ` is complex.
pub fn modal_matrix(plant: &Plant, k0: &DMatrix<f64>, scale: f64, lambda: Complex<f64>) -> DMatrix<f64> {
    let bk = &plant.b * k0;
    let re = &plant.a + &bk * (scale * lambda.re);
    if lambda.im == 0.0 {
        re
    } else {
        real_embedding(&re, &(&bk * (scale * lambda.im)))
    }
}

/// True iff every modal matrix `A + scale·λ_k·B·K` is Schur.
pub fn certify_network(plant: &Plant, eigenvalues: &[Complex<f64>], k0: &DMatrix<f64>, scale: f64) -> bool {
    eigenvalues.iter().all(|l| is_schur(&modal_matrix(plant, k0, scale, *l)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

impl DecayFit {
    /// Per-step contraction factor `exp(slope)`.
    pub fn rate(&self) -> f64 {
        self.slope.exp()
    }
}

/// Least-squares fit of `ln y(t)` over `t ∈ [t0, t1]`, skipping samples
/// at or below `floor`.
pub fn fit_log_linear(series: &[f64], t0: usize, t1: usize, floor: f64) -> Option<DecayFit> {
    let pts: Vec<(f64, f64)> = (t0..=t1.min(series.len().saturating_sub(1)))
        .filter(|t| series[*t] > floor)
        .map(|t| (t as f64, series[t].ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(DecayFit { slope, intercept: my - slope * mx, r_squared, points: pts.len() })
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `states.csv`, `gains.csv`, `errors.csv` and, for the leader-only
/// protocol, `couplings.csv`. One row per time step; the header names each
/// column (`x<agent>_<component>`, `K<follower>_<row><col>`).
pub fn write_trace_csv(trace: &Trace, dir: &Path) -> Result<Vec<PathBuf>> {
    let agents = trace.agents();
    let n = trace.states.first().and_then(|s| s.first()).map_or(0, |x| x.len());
    let (kr, kc) = trace.target_gain.shape();
    let mut out = Vec::new();

    let path = dir.join("states.csv");
    let mut header = vec!["t".to_string()];
    header.extend((0..agents).flat_map(|i| (0..n).map(move |k| format!("x{i}_{k}"))));
    write_rows(
        &path,
        header,
        trace.states.iter().enumerate().map(|(t, xs)| {
            std::iter::once(t.to_string()).chain(xs.iter().flat_map(|x| x.iter().map(|v| v.to_string()))).collect()
        }),
    )?;
    out.push(path);

    let path = dir.join("gains.csv");
    let mut header = vec!["t".to_string()];
    header.extend((1..agents).flat_map(|i| (0..kr).flat_map(move |r| (0..kc).map(move |c| format!("K{i}_{r}{c}")))));
    write_rows(
        &path,
        header,
        trace.gains.iter().enumerate().map(|(t, ks)| {
            let mut row = vec![t.to_string()];
            for k in ks {
                for r in 0..kr {
                    row.extend((0..kc).map(|c| k[(r, c)].to_string()));
                }
            }
            row
        }),
    )?;
    out.push(path);

    if !trace.couplings.is_empty() {
        let path = dir.join("couplings.csv");
        let mut header = vec!["t".to_string()];
        header.extend((1..agents).map(|i| format!("c{i}")));
        write_rows(
            &path,
            header,
            trace.couplings.iter().enumerate().map(|(t, cs)| {
                std::iter::once(t.to_string()).chain(cs.iter().map(|c| c.to_string())).collect()
            }),
        )?;
        out.push(path);
    }

    let path = dir.join("errors.csv");
    let header = vec!["t".into(), "consensus_error".into(), "gain_disagreement".into()];
    write_rows(
        &path,
        header,
        trace
            .consensus_error
            .iter()
            .zip(&trace.gain_disagreement)
            .enumerate()
            .map(|(t, (e, g))| vec![t.to_string(), e.to_string(), g.to_string()]),
    )?;
    out.push(path);
    Ok(out)
}
