//! Ground-truth agent model, open-loop data collection and the checks on the
//! data side (rank condition, quadratic noise bound).

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};
use crate::linalg::{self, vstack, PSD_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Plant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(CoreError::NonSquare { rows: a.nrows(), cols: a.ncols() });
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(CoreError::DimensionMismatch(format!("A is {}x{}, B is {}x{}", a.nrows(), a.ncols(), b.nrows(), b.ncols())));
        }
        Ok(Self { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// Rank test of `[B, AB, ..., A^{n-1}B]`.
    pub fn is_controllable(&self) -> bool {
        let n = self.n();
        let p = self.p();
        let mut c = DMatrix::zeros(n, n * p);
        let mut blk = self.b.clone();
        for k in 0..n {
            c.view_mut((0, k * p), (n, p)).copy_from(&blk);
            blk = &self.a * blk;
        }
        linalg::rank(&c) == n
    }
}

/// One agent's sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRecord {
    pub u_minus: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub x_minus: DMatrix<f64>,
    pub x_plus: DMatrix<f64>,
    /// True process noise, known only to the harness.
    pub d: Option<DMatrix<f64>>,
}

impl DataRecord {
    pub fn new(u_minus: DMatrix<f64>, x: DMatrix<f64>, d: Option<DMatrix<f64>>) -> Result<Self> {
        let t = u_minus.ncols();
        if x.ncols() != t + 1 {
            return Err(CoreError::DimensionMismatch(format!("X has {} columns, expected {}", x.ncols(), t + 1)));
        }
        if let Some(d) = &d {
            if d.shape() != (x.nrows(), t) {
                return Err(CoreError::DimensionMismatch(format!("D is {}x{}, expected {}x{t}", d.nrows(), d.ncols(), x.nrows())));
            }
        }
        let x_minus = x.columns(0, t).into_owned();
        let x_plus = x.columns(1, t).into_owned();
        Ok(Self { u_minus, x, x_minus, x_plus, d })
    }

    pub fn horizon(&self) -> usize {
        self.u_minus.ncols()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.u_minus.nrows()
    }

    /// `[U₋; X₋]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        vstack(&self.u_minus, &self.x_minus)
    }
}

/// Quadratic bound `[I D] N [I D]ᵀ ⪰ 0` on the noise block.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBound {
    pub n11: DMatrix<f64>,
    pub n12: DMatrix<f64>,
    pub n22: DMatrix<f64>,
}

impl NoiseBound {
    pub fn new(n11: DMatrix<f64>, n12: DMatrix<f64>, n22: DMatrix<f64>) -> Result<Self> {
        let n = n11.nrows();
        let t = n22.nrows();
        if !n11.is_square() || !n22.is_square() || n12.shape() != (n, t) {
            return Err(CoreError::InvalidNoiseBound(format!(
                "block shapes {:?}, {:?}, {:?}",
                n11.shape(),
                n12.shape(),
                n22.shape()
            )));
        }
        let asym = |m: &DMatrix<f64>| (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0);
        if asym(&n11) || asym(&n22) {
            return Err(CoreError::InvalidNoiseBound("N11 and N22 must be symmetric".into()));
        }
        if linalg::min_symmetric_eigenvalue(&n11) <= 0.0 {
            return Err(CoreError::InvalidNoiseBound("N11 must be positive definite".into()));
        }
        if linalg::min_symmetric_eigenvalue(&(-&n22)) <= 0.0 {
            return Err(CoreError::InvalidNoiseBound("N22 must be negative definite".into()));
        }
        Ok(Self { n11, n12, n22 })
    }

    pub fn n21(&self) -> DMatrix<f64> {
        self.n12.transpose()
    }

    pub fn n(&self) -> usize {
        self.n11.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.n22.nrows()
    }

    /// The full `(n+T)×(n+T)` matrix `[[N11, N12], [N21, N22]]`.
    pub fn full(&self) -> DMatrix<f64> {
        let (n, t) = (self.n(), self.horizon());
        let mut m = DMatrix::zeros(n + t, n + t);
        m.view_mut((0, 0), (n, n)).copy_from(&self.n11);
        m.view_mut((0, n), (n, t)).copy_from(&self.n12);
        m.view_mut((n, 0), (t, n)).copy_from(&self.n21());
        m.view_mut((n, n), (t, t)).copy_from(&self.n22);
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputPolicy {
    /// i.i.d. uniform samples per channel and step.
    Uniform { low: f64, high: f64 },
    Zero,
    Given(DMatrix<f64>),
}

impl Default for InputPolicy {
    fn default() -> Self {
        InputPolicy::Uniform { low: -1.0, high: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoisePolicy {
    Zero,
    /// Gaussian draws rescaled as a block until `bound` holds.
    BoundedGaussian { bound: NoiseBound, std_dev: f64 },
}

pub fn default_horizon(n: usize, p: usize) -> usize {
    3 * (n + p)
}

/// Runs the plant open loop from `x0` under inputs `u` and additive noise `d`.
pub fn simulate_open_loop(plant: &Plant, x0: &DVector<f64>, u: &DMatrix<f64>, d: Option<&DMatrix<f64>>) -> Result<DataRecord> {
    let (n, t) = (plant.n(), u.ncols());
    if x0.len() != n || u.nrows() != plant.p() {
        return Err(CoreError::DimensionMismatch("initial state or input size".into()));
    }
    let mut x = DMatrix::zeros(n, t + 1);
    x.set_column(0, x0);
    for k in 0..t {
        let mut next = plant.step(&x.column(k).into_owned(), &u.column(k).into_owned());
        if let Some(d) = d {
            next += d.column(k);
        }
        x.set_column(k + 1, &next);
    }
    DataRecord::new(u.clone(), x, d.cloned())
}

/// Samples one data record; `x0` defaults to i.i.d. uniform on `[-1, 1]`.
pub fn collect_data<R: Rng + ?Sized>(
    plant: &Plant,
    horizon: usize,
    input: &InputPolicy,
    noise: &NoisePolicy,
    x0: Option<&DVector<f64>>,
    rng: &mut R,
) -> Result<DataRecord> {
    let (n, p) = (plant.n(), plant.p());
    if horizon < n + p {
        return Err(CoreError::HorizonTooShort { horizon, required: n + p });
    }
    if !plant.is_controllable() {
        log::warn!("plant (A, B) is not controllable; data may fail the rank condition");
    }
    let x0 = match x0 {
        Some(x) => x.clone(),
        None => DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0)),
    };
    let u = match input {
        InputPolicy::Uniform { low, high } => DMatrix::from_fn(p, horizon, |_, _| rng.random_range(*low..=*high)),
        InputPolicy::Zero => DMatrix::zeros(p, horizon),
        InputPolicy::Given(u) => {
            if u.shape() != (p, horizon) {
                return Err(CoreError::DimensionMismatch(format!("given input is {}x{}", u.nrows(), u.ncols())));
            }
            u.clone()
        }
    };
    let d = match noise {
        NoisePolicy::Zero => None,
        NoisePolicy::BoundedGaussian { bound, std_dev } => {
            if bound.n() != n || bound.horizon() != horizon {
                return Err(CoreError::DimensionMismatch("noise bound does not match n and T".into()));
            }
            let normal = Normal::new(0.0, *std_dev).map_err(|e| CoreError::InvalidNoiseBound(e.to_string()))?;
            let raw = DMatrix::from_fn(n, horizon, |_, _| normal.sample(rng));
            Some(fit_noise_to_bound(&raw, bound))
        }
    };
    simulate_open_loop(plant, &x0, &u, d.as_ref())
}

/// `N11 + N12 Dᵀ + D N21 + D N22 Dᵀ`.
pub fn noise_quadratic(d: &DMatrix<f64>, bound: &NoiseBound) -> DMatrix<f64> {
    let cross = &bound.n12 * d.transpose();
    &bound.n11 + &cross + cross.transpose() + d * &bound.n22 * d.transpose()
}

pub fn check_noise_bound(d: &DMatrix<f64>, bound: &NoiseBound) -> Result<bool> {
    if d.shape() != (bound.n(), bound.horizon()) {
        return Err(CoreError::DimensionMismatch(format!(
            "D is {}x{}, bound expects {}x{}",
            d.nrows(),
            d.ncols(),
            bound.n(),
            bound.horizon()
        )));
    }
    Ok(linalg::is_psd(&noise_quadratic(d, bound), PSD_TOL))
}

/// Shrinks `d` by the largest factor in `(0, 1]` that satisfies the bound,
/// then by a further 1% so the result sits strictly inside.
pub fn fit_noise_to_bound(d: &DMatrix<f64>, bound: &NoiseBound) -> DMatrix<f64> {
    let ok = |s: f64| linalg::min_symmetric_eigenvalue(&noise_quadratic(&(d * s), bound)) >= 0.0;
    if ok(1.0) {
        return d.clone();
    }
    // feasible scalings form an interval containing 0 because N22 ≺ 0
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    d * (0.99 * lo)
}

pub fn check_rank(rec: &DataRecord) -> bool {
    linalg::rank(&rec.stacked()) == rec.n() + rec.p()
}

/// Writes `m` as CSV: a `rows,cols` record followed by the rows.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(File::create(path)?);
    w.write_record([m.nrows().to_string(), m.ncols().to_string()])?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(File::open(path)?);
    let mut records = r.records();
    let head = records.next().ok_or_else(|| CoreError::Parse(format!("{}: empty file", path.display())))??;
    let dim = |k: usize| -> Result<usize> {
        head.get(k)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CoreError::Parse(format!("{}: bad dimension header", path.display())))
    };
    let (rows, cols) = (dim(0)?, dim(1)?);
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let rec = records.next().ok_or_else(|| CoreError::Parse(format!("{}: missing row {i}", path.display())))??;
        if rec.len() != cols {
            return Err(CoreError::Parse(format!("{}: row {i} has {} entries", path.display(), rec.len())));
        }
        for (j, v) in rec.iter().enumerate() {
            m[(i, j)] = v.trim().parse().map_err(|_| CoreError::Parse(format!("{}: bad number {v:?}", path.display())))?;
        }
    }
    Ok(m)
}

/// Writes `<stem>_u.csv`, `<stem>_x.csv` and, if present, `<stem>_d.csv`.
pub fn write_record_csv(rec: &DataRecord, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut out = vec![dir.join(format!("{stem}_u.csv")), dir.join(format!("{stem}_x.csv"))];
    write_matrix_csv(&out[0], &rec.u_minus)?;
    write_matrix_csv(&out[1], &rec.x)?;
    if let Some(d) = &rec.d {
        let p = dir.join(format!("{stem}_d.csv"));
        write_matrix_csv(&p, d)?;
        out.push(p);
    }
    Ok(out)
}

pub fn read_record_csv(dir: &Path, stem: &str) -> Result<DataRecord> {
    let u = read_matrix_csv(&dir.join(format!("{stem}_u.csv")))?;
    let x = read_matrix_csv(&dir.join(format!("{stem}_x.csv")))?;
    let dp = dir.join(format!("{stem}_d.csv"));
    let d = if dp.exists() { Some(read_matrix_csv(&dp)?) } else { None };
    DataRecord::new(u, x, d)
}
