//! Dense primal-dual interior-point method.
//!
//! The problem is first reduced to an unconstrained parameterization
//! `x = x0 + W z`: `x0` solves the equalities in the least-squares sense and
//! the orthonormal columns of `W` span the directions that satisfy the
//! equalities and actually influence a constraint or the objective.
//! A phase-I run on `min s  s.t. F_b(z) + s I ⪰ 0` either certifies
//! infeasibility (`s* > 0`) or yields a strictly feasible start for the
//! phase-II run on the objective. Both phases use the HKM search direction
//! with a Mehrotra predictor-corrector step from a strictly feasible primal
//! point. Every LMI block is scaled to unit norm and every reduced coordinate
//! is boxed by `|z_l| ≤ box_radius`.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::problem::{Sense, SdpProblem, SolveStatus};

#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Relative duality-gap target.
    pub gap_tol: f64,
    /// Residual tolerance for the returned point (minimum eigenvalue).
    pub feas_tol: f64,
    /// Phase-I optimum above this certifies infeasibility.
    pub infeas_tol: f64,
    /// Cap on interior-point iterations per phase.
    pub max_iter: usize,
    /// Bound on every reduced coordinate.
    pub box_radius: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { gap_tol: 1e-10, feas_tol: 1e-7, infeas_tol: 1e-8, max_iter: 200, box_radius: 1e6 }
    }
}

pub(crate) struct RawOutcome {
    pub status: SolveStatus,
    pub x: Option<DVector<f64>>,
    pub message: String,
    pub iterations: usize,
}

impl RawOutcome {
    fn fail(status: SolveStatus, x: Option<DVector<f64>>, message: impl Into<String>, iterations: usize) -> Self {
        Self { status, x, message: message.into(), iterations }
    }
}

/// One LMI block `F0 + Σ z_l F_l ⪰ 0` in reduced coordinates.
#[derive(Debug, Clone)]
struct Block {
    f0: DMatrix<f64>,
    coeffs: Vec<(usize, DMatrix<f64>)>,
}

impl Block {
    fn order(&self) -> usize {
        self.f0.nrows()
    }

    fn eval(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.f0.clone();
        for (l, f) in &self.coeffs {
            m += f * z[*l];
        }
        m
    }
}

struct Reduced {
    blocks: Vec<Block>,
    /// Objective gradient in reduced coordinates (already sign-adjusted to minimize).
    c: DVector<f64>,
    x0: DVector<f64>,
    w: DMatrix<f64>,
}

impl Reduced {
    fn lift(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.x0 + &self.w * z
    }
}

pub(crate) fn solve(p: &SdpProblem, settings: &SolverSettings) -> RawOutcome {
    let reduced = match reduce(p) {
        Ok(r) => r,
        Err(outcome) => return outcome,
    };
    let m = reduced.w.ncols();
    let has_objective = p.objective.is_some();

    if m == 0 {
        // nothing left to choose
        let x = reduced.x0.clone();
        let feasible = reduced
            .blocks
            .iter()
            .all(|b| b.f0.symmetric_eigenvalues().min() >= -settings.feas_tol);
        let status = match (feasible, has_objective) {
            (false, _) => SolveStatus::Infeasible,
            (true, true) => SolveStatus::Optimal,
            (true, false) => SolveStatus::Feasible,
        };
        return RawOutcome::fail(status, Some(x), "no free directions", 0);
    }

    let mut iterations = 0usize;
    let phase1 = match phase_one(&reduced, settings, !has_objective, &mut iterations) {
        Ok(r) => r,
        Err(msg) => return RawOutcome::fail(SolveStatus::NumericalFailure, None, msg, iterations),
    };
    log::debug!("phase I: s* = {:e} after {} iterations", phase1.s, iterations);
    if phase1.s > settings.infeas_tol {
        return RawOutcome::fail(
            SolveStatus::Infeasible,
            None,
            format!("phase I optimum {:e} > 0", phase1.s),
            iterations,
        );
    }
    if phase1.s >= -settings.infeas_tol {
        // feasible set without interior: keep the phase-I point
        return RawOutcome::fail(
            SolveStatus::Feasible,
            Some(reduced.lift(&phase1.z)),
            format!("no strict interior (phase I optimum {:e})", phase1.s),
            iterations,
        );
    }
    if !has_objective {
        return RawOutcome::fail(SolveStatus::Feasible, Some(reduced.lift(&phase1.z)), "feasible", iterations);
    }

    match phase_two(&reduced, phase1.z, settings, &mut iterations) {
        Ok((z, msg)) => {
            if reduced.c.dot(&z).abs() > 0.1 * settings.box_radius * reduced.c.amax() {
                return RawOutcome::fail(
                    SolveStatus::NumericalFailure,
                    Some(reduced.lift(&z)),
                    "objective appears unbounded (iterate reached the coordinate box)",
                    iterations,
                );
            }
            RawOutcome::fail(SolveStatus::Optimal, Some(reduced.lift(&z)), msg, iterations)
        }
        Err((Some(z), msg)) if is_feasible_point(&reduced, &z, settings.feas_tol) => RawOutcome::fail(
            SolveStatus::Feasible,
            Some(reduced.lift(&z)),
            format!("{msg}; optimality not certified"),
            iterations,
        ),
        Err((z, msg)) => RawOutcome::fail(SolveStatus::NumericalFailure, z.map(|z| reduced.lift(&z)), msg, iterations),
    }
}

fn is_feasible_point(reduced: &Reduced, z: &DVector<f64>, tol: f64) -> bool {
    reduced.blocks.iter().all(|b| b.eval(z).symmetric_eigenvalues().min() >= -tol)
}

/// Orthonormal basis of the null space of `e` (q × n) and a least-squares
/// particular solution of `e x = rhs`.
fn eliminate_equalities(e: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), String> {
    let (q, n) = e.shape();
    let size = q.max(n);
    let mut padded = DMatrix::zeros(size, n);
    padded.view_mut((0, 0), (q, n)).copy_from(e);
    let svd = padded.clone().svd(true, true);
    let (u, vt) = match (svd.u.as_ref(), svd.v_t.as_ref()) {
        (Some(u), Some(vt)) => (u.clone(), vt.clone()),
        _ => return Err("svd failed".into()),
    };
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(1e-300);
    let mut rhs_p = DVector::zeros(size);
    rhs_p.rows_mut(0, q).copy_from(rhs);
    let mut x0 = DVector::zeros(n);
    let mut null_cols = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        let v = vt.row(k).transpose();
        if *s > tol {
            let coef = u.column(k).dot(&rhs_p) / s;
            x0 += v * coef;
        } else {
            null_cols.push(v);
        }
    }
    let resid = (e * &x0 - rhs).norm();
    if resid > 1e-9 * (1.0 + rhs.norm()) {
        return Err(format!("inconsistent equality constraints (residual {resid:e})"));
    }
    let nb = if null_cols.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&null_cols) };
    Ok((x0, nb))
}

fn reduce(p: &SdpProblem) -> Result<Reduced, RawOutcome> {
    let n = p.scalar_count();

    // equalities
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for c in &p.eq {
        let (r, cc) = c.expr.shape();
        for i in 0..r {
            for j in 0..cc {
                let mut a = DVector::zeros(n);
                for (k, m) in c.expr.terms() {
                    a[*k] = m[(i, j)];
                }
                let b = -c.expr.constant_part()[(i, j)];
                if a.amax() == 0.0 {
                    if b.abs() > 1e-12 {
                        return Err(RawOutcome::fail(
                            SolveStatus::Infeasible,
                            None,
                            format!("equality `{}` has a nonzero constant entry", c.name),
                            0,
                        ));
                    }
                    continue;
                }
                rows.push((a, b));
            }
        }
    }
    let (x0, nullb) = if rows.is_empty() {
        (DVector::zeros(n), DMatrix::identity(n, n))
    } else {
        let e = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]);
        let rhs = DVector::from_fn(rows.len(), |i, _| rows[i].1);
        eliminate_equalities(&e, &rhs).map_err(|m| RawOutcome::fail(SolveStatus::Infeasible, None, m, 0))?
    };

    // objective vector in x-space
    let mut cx = DVector::zeros(n);
    if let Some(obj) = &p.objective {
        for (k, m) in obj.expr.terms() {
            cx[*k] = m[(0, 0)];
        }
        if obj.sense == Sense::Maximize {
            cx = -cx;
        }
    }

    // blocks in the equality-reduced coordinates y: F0 + Σ y_j F'_j
    let r = nullb.ncols();
    let mut stage: Vec<Block> = Vec::with_capacity(p.psd.len());
    for c in &p.psd {
        let order = c.expr.shape().0;
        let mut f0 = c.expr.constant_part().clone() - DMatrix::identity(order, order) * c.margin;
        for (k, m) in c.expr.terms() {
            if x0[*k] != 0.0 {
                f0 += m * x0[*k];
            }
        }
        let mut acc: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
        for (k, m) in c.expr.terms() {
            if m.amax() == 0.0 {
                continue;
            }
            for j in 0..r {
                let w = nullb[(*k, j)];
                if w != 0.0 {
                    *acc.entry(j).or_insert_with(|| DMatrix::zeros(order, order)) += m * w;
                }
            }
        }
        let coeffs: Vec<(usize, DMatrix<f64>)> = acc.into_iter().filter(|(_, f)| f.amax() > 0.0).collect();
        stage.push(Block { f0, coeffs });
    }
    let cy = nullb.transpose() * &cx;

    // keep only directions that influence something
    let mut gram = &cy * cy.transpose();
    for b in &stage {
        for (i, (ji, fi)) in b.coeffs.iter().enumerate() {
            for (jk, fk) in b.coeffs.iter().skip(i) {
                let v = fi.dot(fk);
                gram[(*ji, *jk)] += v;
                if ji != jk {
                    gram[(*jk, *ji)] += v;
                }
            }
        }
    }
    let gmax = (0..r).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let diag_only = (0..r).all(|i| (0..r).all(|j| i == j || gram[(i, j)].abs() <= 1e-14 * gmax));
    let relevant: DMatrix<f64> = if r == 0 || gmax == 0.0 {
        DMatrix::zeros(r, 0)
    } else if diag_only {
        let cols: Vec<DVector<f64>> = (0..r)
            .filter(|&i| gram[(i, i)] > 1e-13 * gmax)
            .map(|i| {
                let mut e = DVector::zeros(r);
                e[i] = 1.0;
                e
            })
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(r, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    } else {
        let eig = SymmetricEigen::new(gram.clone());
        let emax = eig.eigenvalues.max();
        let cols: Vec<DVector<f64>> = (0..r)
            .filter(|&i| eig.eigenvalues[i] > 1e-13 * emax)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(r, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    };
    let m = relevant.ncols();
    let w = &nullb * &relevant;

    let mut blocks = Vec::with_capacity(stage.len());
    for b in stage {
        let mut acc: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
        for (j, fj) in &b.coeffs {
            for l in 0..m {
                let v = relevant[(*j, l)];
                if v.abs() > 1e-15 {
                    *acc.entry(l).or_insert_with(|| DMatrix::zeros(b.order(), b.order())) += fj * v;
                }
            }
        }
        let coeffs: Vec<(usize, DMatrix<f64>)> = acc.into_iter().filter(|(_, f)| f.amax() > 1e-15).collect();
        // normalize for conditioning; feasibility is scale invariant
        let scale = coeffs.iter().map(|(_, f)| f.norm()).fold(b.f0.norm(), f64::max);
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let f0 = b.f0 / scale;
        let coeffs = coeffs.into_iter().map(|(l, f)| (l, f / scale)).collect();
        blocks.push(Block { f0, coeffs });
    }
    let mut c = relevant.transpose() * cy;
    let cn = c.norm();
    if cn > 0.0 {
        c /= cn;
    }
    Ok(Reduced { blocks, c, x0, w })
}


struct PhaseOne {
    z: DVector<f64>,
    s: f64,
}

fn unit(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn box_blocks(m: usize, radius: f64) -> Vec<Block> {
    (0..m)
        .flat_map(|l| {
            [1.0, -1.0].into_iter().map(move |sign| Block { f0: unit(1.0), coeffs: vec![(l, unit(sign / radius))] })
        })
        .collect()
}

fn phase_one(
    r: &Reduced,
    settings: &SolverSettings,
    to_optimum: bool,
    iterations: &mut usize,
) -> Result<PhaseOne, String> {
    let m = r.w.ncols();
    let mut blocks: Vec<Block> = r
        .blocks
        .iter()
        .map(|b| {
            let mut b = b.clone();
            b.coeffs.push((m, DMatrix::identity(b.order(), b.order())));
            b
        })
        .collect();
    blocks.push(Block { f0: unit(1.0), coeffs: vec![(m, unit(1.0))] });
    blocks.extend(box_blocks(m, settings.box_radius));
    let mut c = DVector::zeros(m + 1);
    c[m] = 1.0;

    let worst = r.blocks.iter().map(|b| -b.f0.symmetric_eigenvalues().min()).fold(0.0, f64::max);
    let mut z0 = DVector::zeros(m + 1);
    z0[m] = worst + 1.0;

    let stop = |z: &DVector<f64>| !to_optimum && z[m] < -1e-3;
    let (z, _) = interior_point(&blocks, &c, z0, settings, &stop, iterations).map_err(|(_, msg)| msg)?;
    Ok(PhaseOne { s: z[m], z: z.rows(0, m).into_owned() })
}

fn phase_two(
    r: &Reduced,
    z0: DVector<f64>,
    settings: &SolverSettings,
    iterations: &mut usize,
) -> Result<(DVector<f64>, String), (Option<DVector<f64>>, String)> {
    let mut blocks = r.blocks.clone();
    blocks.extend(box_blocks(r.w.ncols(), settings.box_radius));
    interior_point(&blocks, &r.c, z0, settings, &|_| false, iterations)
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest step `α` with `x + α dx ⪰ 0`, given the Cholesky factor of `x`.
fn max_step(chol: &Cholesky<f64, Dyn>, dx: &DMatrix<f64>) -> f64 {
    if dx.nrows() == 1 {
        let x = chol.l_dirty()[(0, 0)].powi(2);
        return if dx[(0, 0)] < 0.0 { -x / dx[(0, 0)] } else { f64::INFINITY };
    }
    let l = chol.l();
    let Some(t) = l.solve_lower_triangular(dx) else { return 0.0 };
    let Some(t) = l.solve_lower_triangular(&t.transpose()) else { return 0.0 };
    let lmin = sym(&t).symmetric_eigenvalues().min();
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn solve_spd(mut mat: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = Cholesky::new(mat.clone()) {
        return Some(ch.solve(rhs));
    }
    let scale = (0..mat.nrows()).map(|i| mat[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    for i in 0..mat.nrows() {
        mat[(i, i)] += 1e-12 * scale;
    }
    if let Some(ch) = Cholesky::new(mat.clone()) {
        return Some(ch.solve(rhs));
    }
    mat.svd(true, true).solve(rhs, 1e-14 * scale).ok()
}

struct BlockState {
    s: DMatrix<f64>,
    chol_s: Cholesky<f64, Dyn>,
    sinv: DMatrix<f64>,
    /// `S⁻¹ F_l` for each coefficient of the block.
    sf: Vec<DMatrix<f64>>,
}

type PdResult = Result<(DVector<f64>, String), (Option<DVector<f64>>, String)>;

/// Primal-dual path following for `min cᵀz  s.t.  F_b(z) ⪰ 0` from a
/// strictly feasible `z0`. The primal iterate stays feasible while the dual
/// residual `c - A*(Z)` is driven to zero.
fn interior_point(
    blocks: &[Block],
    c: &DVector<f64>,
    z0: DVector<f64>,
    settings: &SolverSettings,
    stop: &dyn Fn(&DVector<f64>) -> bool,
    iterations: &mut usize,
) -> PdResult {
    let m = c.len();
    let nu: usize = blocks.iter().map(Block::order).sum();
    let mut z = z0;
    let mut dual: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
    for b in blocks {
        let s = b.eval(&z);
        match s.clone().try_inverse() {
            Some(inv) if Cholesky::new(s).is_some() => dual.push(sym(&inv)),
            _ => return Err((None, "starting point is not strictly feasible".into())),
        }
    }

    let mut coeff_gram = DMatrix::zeros(m, m);
    for b in blocks {
        for (i, (l, f)) in b.coeffs.iter().enumerate() {
            for (k, fk) in b.coeffs.iter().skip(i) {
                let v = f.dot(fk);
                coeff_gram[(*l, *k)] += v;
                if *l != *k {
                    coeff_gram[(*k, *l)] += v;
                }
            }
        }
    }
    let coeff_gram = Cholesky::new(coeff_gram);

    // scale the central start Z = θ S⁻¹ to best fit the dual equations
    let mut g0 = DVector::zeros(m);
    for (b, zb) in blocks.iter().zip(&dual) {
        for (l, f) in &b.coeffs {
            g0[*l] += f.dot(zb);
        }
    }
    let theta = if g0.norm_squared() > 0.0 { c.dot(&g0) / g0.norm_squared() } else { 1.0 };
    if theta > 0.0 && theta.is_finite() {
        let theta = theta.clamp(1e-6, 1e6);
        for zb in dual.iter_mut() {
            *zb *= theta;
        }
    }

    let mut stalled = 0usize;
    let mut best: Option<(DVector<f64>, f64, f64)> = None;
    let mut min_res = f64::INFINITY;
    for _ in 0..settings.max_iter {
        *iterations += 1;
        let mut states = Vec::with_capacity(blocks.len());
        for b in blocks {
            let s = b.eval(&z);
            let Some(chol_s) = Cholesky::new(s.clone()) else {
                return Err((Some(z), "lost primal feasibility".into()));
            };
            let sinv = chol_s.inverse();
            let sf = b.coeffs.iter().map(|(_, f)| &sinv * f).collect();
            states.push(BlockState { s, chol_s, sinv, sf });
        }

        let mut gap = 0.0;
        let mut resid = c.clone();
        for ((b, st), zb) in blocks.iter().zip(&states).zip(&dual) {
            gap += st.s.dot(zb);
            for (l, f) in &b.coeffs {
                resid[*l] -= f.dot(zb);
            }
        }
        let mu = gap / nu as f64;
        let obj = c.dot(&z);
        let rel_gap = gap / obj.abs().max(1.0);
        let res = resid.norm();
        log::trace!("ipm: obj {obj:e} gap {rel_gap:e} dual residual {res:e}");
        if stop(&z) {
            return Ok((z, "stopping criterion met".into()));
        }
        if rel_gap <= settings.gap_tol && res <= 1e-9 {
            return Ok((z, format!("converged: gap {rel_gap:e}, dual residual {res:e}")));
        }
        if best.as_ref().is_none_or(|(_, g, r)| rel_gap.max(res) < g.max(*r)) {
            best = Some((z.clone(), rel_gap, res));
        }
        min_res = min_res.min(res);
        if res > 1e-9 && res > 100.0 * min_res && rel_gap <= settings.gap_tol {
            // roundoff is now undoing dual progress
            return finish_stalled(z, best.clone(), "dual residual growing");
        }

        // Schur complement and barrier gradient
        let mut schur = DMatrix::zeros(m, m);
        let mut g = DVector::zeros(m);
        for ((b, st), zb) in blocks.iter().zip(&states).zip(&dual) {
            let zf: Vec<DMatrix<f64>> = b.coeffs.iter().map(|(_, f)| zb * f).collect();
            for (i, (l, f)) in b.coeffs.iter().enumerate() {
                g[*l] += f.dot(&st.sinv);
                for (k, (kk, _)) in b.coeffs.iter().enumerate().skip(i) {
                    let v = st.sf[i].dot(&zf[k].transpose());
                    schur[(*l, *kk)] += v;
                    if l != kk {
                        schur[(*kk, *l)] += v;
                    }
                }
            }
        }

        let direction = |sigma_mu: f64, corr: Option<&[DMatrix<f64>]>| -> Option<(DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
            let mut rhs = &g * sigma_mu - c;
            if let Some(corr) = corr {
                for ((b, st), d) in blocks.iter().zip(&states).zip(corr) {
                    for (i, (l, _)) in b.coeffs.iter().enumerate() {
                        rhs[*l] -= st.sf[i].dot(&d.transpose());
                    }
                }
            }
            let dz = solve_spd(schur.clone(), &rhs)?;
            let mut ds_all = Vec::with_capacity(blocks.len());
            let mut dzm_all = Vec::with_capacity(blocks.len());
            for (bi, (b, st)) in blocks.iter().zip(&states).enumerate() {
                let n = b.order();
                let mut ds = DMatrix::zeros(n, n);
                for (l, f) in &b.coeffs {
                    ds += f * dz[*l];
                }
                let mut inner = &ds * &dual[bi];
                if let Some(corr) = corr {
                    inner += &corr[bi];
                }
                let dzm = &st.sinv * sigma_mu - &dual[bi] - &st.sinv * inner;
                dzm_all.push(sym(&dzm));
                ds_all.push(ds);
            }
            // re-impose A*(ΔZ) = r, lost to cancellation when S is nearly singular
            if let Some(gram) = &coeff_gram {
                let mut defect = resid.clone();
                for (b, d) in blocks.iter().zip(&dzm_all) {
                    for (l, f) in &b.coeffs {
                        defect[*l] -= f.dot(d);
                    }
                }
                let y = gram.solve(&defect);
                for (b, d) in blocks.iter().zip(dzm_all.iter_mut()) {
                    for (l, f) in &b.coeffs {
                        *d += f * y[*l];
                    }
                }
            }
            Some((dz, ds_all, dzm_all))
        };
        let steps = |ds: &[DMatrix<f64>], dzm: &[DMatrix<f64>]| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for (bi, st) in states.iter().enumerate() {
                ap = ap.min(max_step(&st.chol_s, &ds[bi]));
                match Cholesky::new(dual[bi].clone()) {
                    Some(ch) => ad = ad.min(max_step(&ch, &dzm[bi])),
                    None => ad = 0.0,
                }
            }
            (ap, ad)
        };

        // predictor
        let Some((_, ds_a, dzm_a)) = direction(0.0, None) else {
            return finish_stalled(z, best.clone(), "singular Schur complement");
        };
        let (ap, ad) = steps(&ds_a, &dzm_a);
        let step = ap.min(ad).min(1.0);
        let (ap, ad) = (step, step);
        let mut gap_aff = 0.0;
        for (bi, st) in states.iter().enumerate() {
            let sa = &st.s + &ds_a[bi] * ap;
            let za = &dual[bi] + &dzm_a[bi] * ad;
            gap_aff += sa.dot(&za);
        }
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);
        let corr: Vec<DMatrix<f64>> = ds_a.iter().zip(&dzm_a).map(|(a, b)| a * b).collect();

        // corrector, falling back to the plain centered direction when the
        // second-order term shortens the step
        let Some((mut dz, ds, mut dzm)) = direction(sigma * mu, Some(&corr)) else {
            return finish_stalled(z, best.clone(), "singular Schur complement");
        };
        let (mut ap, mut ad) = steps(&ds, &dzm);
        if ap.min(ad) < 0.5 * step {
            if let Some((dz2, ds2, dzm2)) = direction(sigma * mu, None) {
                let (ap2, ad2) = steps(&ds2, &dzm2);
                if ap2.min(ad2) > ap.min(ad) {
                    (dz, dzm, ap, ad) = (dz2, dzm2, ap2, ad2);
                }
            }
        }
        let step = (0.98 * ap.min(ad)).min(1.0);
        let (ap, ad) = (step, step);
        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
            if stalled >= 3 {
                return finish_stalled(z, best.clone(), "step length collapsed");
            }
        } else {
            stalled = 0;
        }
        let z_next = &z + &dz * ap;
        if blocks.iter().any(|b| Cholesky::new(b.eval(&z_next)).is_none()) {
            return finish_stalled(z, best.clone(), "primal step left the cone");
        }
        z = z_next;
        for (zb, d) in dual.iter_mut().zip(&dzm) {
            *zb = sym(&(&*zb + d * ad));
        }
    }
    finish_stalled(z, best, "iteration limit reached")
}

fn finish_stalled(z: DVector<f64>, best: Option<(DVector<f64>, f64, f64)>, why: &str) -> PdResult {
    match best {
        Some((zb, gap, res)) if gap <= 1e-7 && res <= 1e-6 => {
            Ok((zb, format!("{why}; accepted at gap {gap:e}, dual residual {res:e}")))
        }
        Some((_, gap, res)) => Err((Some(z), format!("{why} at gap {gap:e}, dual residual {res:e}"))),
        None => Err((Some(z), why.to_string())),
    }
}
