//! Robust gains from noise-corrupted data.

use ddc_sdp::{AffineExpr, SdpProblem};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{checked, invert, require_rank, value};
use crate::error::{CoreError, Result};
use crate::linalg::{min_symmetric_eigenvalue, symmetrize};
use crate::plant::{noise_quadratic, DataRecord, NoiseBound, Plant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumGains {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `2/(λ₁+λ_N)`
    pub alpha: f64,
    /// `(λ_N−λ₁)/(λ_N+λ₁)`
    pub nu: f64,
}

/// Coupling gain and uncertainty radius from the spectrum of `L_ff`.
pub fn spectrum_gains(l_ff: &DMatrix<f64>) -> Result<SpectrumGains> {
    if !l_ff.is_square() || l_ff.is_empty() {
        return Err(CoreError::NonSquare { rows: l_ff.nrows(), cols: l_ff.ncols() });
    }
    let eig = symmetrize(l_ff).symmetric_eigenvalues();
    let (l1, ln) = (eig.min(), eig.max());
    if l1 <= 0.0 {
        return Err(CoreError::NonPositiveSpectrum { lambda_min: l1 });
    }
    Ok(SpectrumGains { lambda_min: l1, lambda_max: ln, alpha: 2.0 / (l1 + ln), nu: (ln - l1) / (ln + l1) })
}

#[derive(Debug, Clone)]
pub struct NoisySynthesis {
    pub phi: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub eps: f64,
    pub gamma_scalar: f64,
    pub tau: f64,
    pub nu: f64,
    pub alpha: f64,
    /// `F Φ⁻¹`
    pub k0: DMatrix<f64>,
    /// Smallest eigenvalue of the block LMI at the returned point.
    pub lmi_min_eig: f64,
    /// Largest uniform strictness margin found in the first stage.
    pub margin: f64,
}

struct Layout {
    n: usize,
    p: usize,
}

impl Layout {
    fn sizes(&self) -> [usize; 6] {
        [self.n, self.n, self.p, self.n, self.p, self.n]
    }

    fn total(&self) -> usize {
        self.sizes().iter().sum()
    }

    /// `Z N Zᵀ` with `Z = [[I, X₊], [0, −X₋], [0, −U₋], 0, 0, 0]`.
    fn data_form(&self, rec: &DataRecord, bound: &NoiseBound) -> DMatrix<f64> {
        let (n, p, t) = (self.n, self.p, rec.horizon());
        let mut z = DMatrix::zeros(self.total(), n + t);
        z.view_mut((0, 0), (n, n)).fill_with_identity();
        z.view_mut((0, n), (n, t)).copy_from(&rec.x_plus);
        z.view_mut((n, n), (n, t)).copy_from(&(-&rec.x_minus));
        z.view_mut((2 * n, n), (p, t)).copy_from(&(-&rec.u_minus));
        symmetrize(&(&z * bound.full() * z.transpose()))
    }
}

/// Numeric value of the robust-consensus LMI at the given decision values.
#[allow(clippy::too_many_arguments)]
pub fn noisy_lmi(
    rec: &DataRecord,
    bound: &NoiseBound,
    nu: f64,
    phi: &DMatrix<f64>,
    f: &DMatrix<f64>,
    eps: f64,
    gamma: f64,
    tau: f64,
) -> DMatrix<f64> {
    let lay = Layout { n: rec.n(), p: rec.p() };
    let (n, p) = (lay.n, lay.p);
    let o = [0, n, 2 * n, 2 * n + p, 3 * n + p, 3 * n + 2 * p];
    let mut m = DMatrix::zeros(lay.total(), lay.total());
    let id = DMatrix::<f64>::identity(n, n);
    m.view_mut((o[0], o[0]), (n, n)).copy_from(&(phi - &id * gamma));
    m.view_mut((o[1], o[3]), (n, n)).copy_from(phi);
    m.view_mut((o[3], o[1]), (n, n)).copy_from(&phi.transpose());
    m.view_mut((o[2], o[2]), (p, p)).fill_diagonal(-tau * nu * nu);
    m.view_mut((o[2], o[3]), (p, n)).copy_from(f);
    m.view_mut((o[3], o[2]), (n, p)).copy_from(&f.transpose());
    m.view_mut((o[3], o[3]), (n, n)).copy_from(phi);
    m.view_mut((o[3], o[4]), (n, p)).copy_from(&f.transpose());
    m.view_mut((o[4], o[3]), (p, n)).copy_from(f);
    m.view_mut((o[4], o[4]), (p, p)).fill_diagonal(tau);
    m.view_mut((o[5], o[5]), (n, n)).fill_with_identity();
    m - lay.data_form(rec, bound) * eps
}

/// Centre `[Â B̂]` and shape matrix of the set of systems consistent with
/// the data and the noise bound. The set is empty iff the shape matrix is not
/// positive semidefinite.
pub fn system_set(rec: &DataRecord, bound: &NoiseBound) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, m) = (rec.n(), rec.n() + rec.p());
    let lay = Layout { n, p: rec.p() };
    let form = lay.data_form(rec, bound);
    let m11 = form.view((0, 0), (n, n)).into_owned();
    let m12 = form.view((0, n), (n, m)).into_owned();
    let m22 = form.view((n, n), (m, m)).into_owned();
    let m22_inv = invert(&m22, "data Gram block")?;
    let centre = -&m12 * &m22_inv;
    let shape = symmetrize(&(m11 - &m12 * &m22_inv * m12.transpose()));
    Ok((centre, shape))
}

/// Upper bound on `τ`; with `ν = 0` the multiplier is otherwise unbounded.
pub const TAU_CAP: f64 = 1e4;

/// Strict feasibility below this margin (with `Φ ⪯ I`) counts as infeasible.
pub const MIN_LMI_MARGIN: f64 = 1e-7;

/// Builds the LMI problem. With `margin = None` a margin variable `t` is
/// maximized; otherwise `γ` is maximized with every strict constraint held at
/// `⪰ margin·I`.
fn robust_problem(rec: &DataRecord, bound: &NoiseBound, nu: f64, margin: Option<f64>) -> Result<SdpProblem> {
    let (n, p) = (rec.n(), rec.p());
    let lay = Layout { n, p };
    let zero = |r: usize, c: usize| AffineExpr::zeros(r, c);

    let mut prob = SdpProblem::new();
    let phi = prob.symmetric("Phi", n)?;
    let f = prob.matrix("F", p, n)?;
    let eps = prob.scalar("eps")?;
    let gamma = prob.scalar("gamma")?;
    let tau = prob.scalar("tau")?;
    let (ph, fe, ft) = (phi.expr(), f.expr(), f.expr().transpose());
    let id_n = DMatrix::identity(n, n);
    let id_p = DMatrix::<f64>::identity(p, p);

    let blocks = vec![
        vec![ph.sub(&gamma.expr().scalar_times(&id_n)?)?, zero(n, n), zero(n, p), zero(n, n), zero(n, p), zero(n, n)],
        vec![zero(n, n), zero(n, n), zero(n, p), ph.clone(), zero(n, p), zero(n, n)],
        vec![zero(p, n), zero(p, n), tau.expr().scalar_times(&(&id_p * (-nu * nu)))?, fe.clone(), zero(p, p), zero(p, n)],
        vec![zero(n, n), ph.transpose(), ft.clone(), ph.clone(), ft.clone(), zero(n, n)],
        vec![zero(p, n), zero(p, n), zero(p, p), fe.clone(), tau.expr().scalar_times(&id_p)?, zero(p, n)],
        vec![zero(n, n), zero(n, n), zero(n, p), zero(n, n), zero(n, p), AffineExpr::identity(n)],
    ];
    let lmi = AffineExpr::block(blocks)?.sub(&eps.expr().scalar_times(&lay.data_form(rec, bound))?)?;
    let strict = [("robust consensus", lmi), ("Phi > 0", ph.clone()), ("gamma > 0", gamma.expr()), ("tau > 0", tau.expr())];
    match margin {
        None => {
            let t = prob.scalar("t")?;
            for (name, e) in strict {
                let k = e.shape().0;
                prob.psd(name, e.sub(&t.expr().scalar_times(&DMatrix::identity(k, k))?)?)?;
            }
            prob.maximize(t.expr())?;
        }
        Some(m) => {
            for (name, e) in strict {
                prob.psd_with_margin(name, e, m)?;
            }
            prob.maximize(gamma.expr())?;
        }
    }
    prob.psd("Phi <= I", AffineExpr::identity(n).sub(&ph)?)?;
    prob.psd("eps >= 0", eps.expr())?;
    prob.psd("tau <= cap", AffineExpr::constant(DMatrix::from_element(1, 1, TAU_CAP)).sub(&tau.expr())?)?;
    Ok(prob)
}

/// Solves the S-procedure LMI for one agent: first the largest uniform
/// margin `t*` under `Φ ⪯ I`, then the largest `γ` at margin `t*/2`.
pub fn informative_gain(rec: &DataRecord, bound: &NoiseBound, gains: &SpectrumGains) -> Result<NoisySynthesis> {
    if bound.n() != rec.n() || bound.horizon() != rec.horizon() {
        return Err(CoreError::DimensionMismatch("noise bound does not match the data record".into()));
    }
    let nu = gains.nu;
    if !(0.0..1.0).contains(&nu) {
        return Err(CoreError::DimensionMismatch(format!("uncertainty radius {nu} outside [0, 1)")));
    }
    require_rank(rec)?;
    let (_, shape) = system_set(rec, bound)?;
    if min_symmetric_eigenvalue(&shape) < -1e-12 * shape.amax().max(1.0) {
        return Err(CoreError::NotInformative("no system is consistent with the data and the noise bound".into()));
    }
    let not_informative = |r: Result<ddc_sdp::SdpSolution>| match r {
        Err(CoreError::Infeasible(msg)) => Err(CoreError::NotInformative(msg)),
        other => other,
    };
    let probe = not_informative(checked(robust_problem(rec, bound, nu, None)?.solve()?, "robust consensus margin"))?;
    let t_star = probe.scalar("t").expect("margin variable");
    if t_star <= MIN_LMI_MARGIN {
        return Err(CoreError::NotInformative(format!("largest LMI margin {t_star:e} is not above {MIN_LMI_MARGIN:e}")));
    }
    let sol = not_informative(checked(robust_problem(rec, bound, nu, Some(0.5 * t_star))?.solve()?, "robust consensus LMI"))?;

    let phi = symmetrize(&value(&sol, "Phi"));
    let f = value(&sol, "F");
    let scalar = |name: &str| sol.scalar(name).expect("declared scalar");
    let (eps, gamma_scalar, tau) = (scalar("eps"), scalar("gamma"), scalar("tau"));
    let k0 = &f * invert(&phi, "Phi")?;
    let lmi_min_eig = min_symmetric_eigenvalue(&noisy_lmi(rec, bound, nu, &phi, &f, eps, gamma_scalar, tau));
    Ok(NoisySynthesis { phi, f, eps, gamma_scalar, tau, nu, alpha: gains.alpha, k0, lmi_min_eig, margin: t_star })
}

/// Draws a member `(Â, B̂)` of the set of systems consistent with the data
/// and the noise bound by perturbing the true plant along a random direction.
pub fn sample_consistent_system<R: Rng + ?Sized>(
    plant: &Plant,
    rec: &DataRecord,
    bound: &NoiseBound,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, p) = (plant.n(), plant.p());
    let d = &rec.x_plus - &plant.a * &rec.x_minus - &plant.b * &rec.u_minus;
    let ok = |dd: &DMatrix<f64>| min_symmetric_eigenvalue(&noise_quadratic(dd, bound)) >= 0.0;
    if !ok(&d) {
        return Err(CoreError::InvalidNoiseBound("true noise violates the bound".into()));
    }
    let ea = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let eb = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let dir = &ea * &rec.x_minus + &eb * &rec.u_minus;
    let at = |s: f64| &d - &dir * s;

    let mut hi = 1.0;
    let mut grow = 0;
    while ok(&at(hi)) {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(CoreError::InvalidNoiseBound("noise bound does not confine the system set".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(&at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = lo * rng.random_range(0.0..1.0);
    Ok((&plant.a + ea * s, &plant.b + eb * s))
}
