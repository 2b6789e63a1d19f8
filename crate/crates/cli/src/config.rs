//! Experiment configuration (TOML) and its resolution into concrete matrices.

use std::path::PathBuf;

use ddc_core::fixtures::{sec6_adjacency, sec6_plant};
use ddc_core::plant::{default_horizon, InputPolicy, NoiseBound, Plant};
use ddc_core::sim::{CONSENSUS_TOL, DEFAULT_HORIZON};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Noiseless,
    Noisy,
    LeaderOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    Sec6,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub fixture: Option<Fixture>,
    pub plant: Option<PlantSpec>,
    pub graph: Option<GraphSpec>,
    #[serde(default)]
    pub data: DataSpec,
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub sim: SimSpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub a: Rows,
    pub b: Rows,
}

/// Either the full `(N+1)×(N+1)` adjacency (node 0 is the leader, `a[i][j]`
/// weights the edge `j → i`) or the follower Laplacian block.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub adjacency: Option<Rows>,
    pub l_ff: Option<Rows>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// Samples per agent `T`.
    pub horizon: Option<usize>,
    pub input: Option<InputSpec>,
    /// Standard deviation of the raw Gaussian noise before rescaling.
    pub noise_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSpec {
    Uniform { low: f64, high: f64 },
    Zero,
}

/// `N11 = n11`, `N12 = 0`, `N22 = n22_scale · I_T`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub n11: Rows,
    pub n22_scale: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub q: Option<Rows>,
    pub r_tilde: Option<Rows>,
    pub q_tilde: Option<Rows>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub horizon: Option<usize>,
    pub tolerance: Option<f64>,
    /// Initial states are uniform on `[-spread, spread]`.
    pub initial_spread: Option<f64>,
    /// Members of the leader's system set checked in noisy mode.
    pub robust_samples: Option<usize>,
}

/// Everything a run needs, with defaults filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub mode: Mode,
    pub seed: u64,
    pub output: PathBuf,
    pub plant: Plant,
    pub adjacency: DMatrix<f64>,
    pub data_horizon: usize,
    pub input: InputPolicy,
    pub noise_std: f64,
    pub bound: Option<NoiseBound>,
    pub q: DMatrix<f64>,
    pub r_tilde: DMatrix<f64>,
    pub q_tilde: DMatrix<f64>,
    pub delta: Option<f64>,
    pub horizon: usize,
    pub tolerance: f64,
    pub initial_spread: f64,
    pub robust_samples: usize,
}

pub const DEFAULT_OUTPUT: &str = "ddc-out";
const DEFAULT_ROBUST_SAMPLES: usize = 50;

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn matrix(field: &str, rows: &Rows) -> Result<DMatrix<f64>, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(config_err(field, "matrix is empty"));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(config_err(field, format!("row {} has {} entries, expected {c}", i + 1, row.len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(config_err(field, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn square(field: &str, rows: &Option<Rows>, size: usize) -> Result<DMatrix<f64>, CliError> {
    match rows {
        None => Ok(DMatrix::identity(size, size)),
        Some(rows) => {
            let m = matrix(field, rows)?;
            if m.shape() != (size, size) {
                return Err(config_err(field, format!("expected {size}x{size}, got {}x{}", m.nrows(), m.ncols())));
            }
            Ok(m)
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The benchmark network with the given mode and seed.
    pub fn sec6(mode: Mode, seed: u64) -> Self {
        Self { mode: Some(mode), seed: Some(seed), fixture: Some(Fixture::Sec6), ..Self::default() }
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let mode = self.mode.ok_or_else(|| config_err("mode", "missing (noiseless | noisy | leader-only)"))?;
        let seed = self.seed.ok_or_else(|| config_err("seed", "missing; every run must be seeded"))?;

        let (plant, adjacency) = match (self.fixture, &self.plant, &self.graph) {
            (Some(Fixture::Sec6), None, None) => (sec6_plant(), sec6_adjacency()),
            (Some(_), _, _) => return Err(config_err("fixture", "cannot be combined with [plant] or [graph]")),
            (None, Some(p), Some(g)) => {
                let plant = Plant::new(matrix("plant.a", &p.a)?, matrix("plant.b", &p.b)?).map_err(|e| config_err("plant", e))?;
                (plant, self.adjacency(g)?)
            }
            (None, None, _) => return Err(config_err("plant", "missing (or set fixture = \"sec6\")")),
            (None, _, None) => return Err(config_err("graph", "missing (or set fixture = \"sec6\")")),
        };
        let (n, p) = (plant.n(), plant.p());

        let data_horizon = match (self.data.horizon, self.fixture) {
            (Some(t), _) => t,
            (None, Some(Fixture::Sec6)) if mode == Mode::Noisy => 30,
            (None, Some(Fixture::Sec6)) => 15,
            (None, None) => default_horizon(n, p),
        };
        if data_horizon < n + p {
            return Err(config_err("data.horizon", format!("{data_horizon} is shorter than n + p = {}", n + p)));
        }
        let input = match &self.data.input {
            None => InputPolicy::default(),
            Some(InputSpec::Zero) => InputPolicy::Zero,
            Some(InputSpec::Uniform { low, high }) if low < high => InputPolicy::Uniform { low: *low, high: *high },
            Some(InputSpec::Uniform { .. }) => return Err(config_err("data.input", "low must be below high")),
        };
        let noise_std = self.data.noise_std.unwrap_or(1.0);
        if noise_std.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(config_err("data.noise_std", "must be positive"));
        }

        let bound = match (mode, &self.noise, self.fixture) {
            (Mode::Noisy, Some(spec), _) => Some(self.bound(spec, n, data_horizon)?),
            (Mode::Noisy, None, Some(Fixture::Sec6)) => {
                Some(ddc_core::fixtures::sec6_noise_bound(n, data_horizon))
            }
            (Mode::Noisy, None, None) => return Err(config_err("noise", "required in noisy mode")),
            _ => None,
        };

        let w = &self.weights;
        let q = square("weights.q", &w.q, n)?;
        let r_tilde = square("weights.r_tilde", &w.r_tilde, p)?;
        let q_tilde = square("weights.q_tilde", &w.q_tilde, p)?;

        let tolerance = self.sim.tolerance.unwrap_or(CONSENSUS_TOL);
        if tolerance.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(config_err("sim.tolerance", "must be positive"));
        }
        let initial_spread = self.sim.initial_spread.unwrap_or(1.0);
        if !(initial_spread.is_finite() && initial_spread >= 0.0) {
            return Err(config_err("sim.initial_spread", "must be finite and non-negative"));
        }

        Ok(Resolved {
            mode,
            seed,
            output: self.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)),
            plant,
            adjacency,
            data_horizon,
            input,
            noise_std,
            bound,
            q,
            r_tilde,
            q_tilde,
            delta: w.delta,
            horizon: self.sim.horizon.unwrap_or(DEFAULT_HORIZON),
            tolerance,
            initial_spread,
            robust_samples: self.sim.robust_samples.unwrap_or(DEFAULT_ROBUST_SAMPLES),
        })
    }

    fn adjacency(&self, g: &GraphSpec) -> Result<DMatrix<f64>, CliError> {
        match (&g.adjacency, &g.l_ff) {
            (Some(a), None) => {
                let a = matrix("graph.adjacency", a)?;
                if !a.is_square() || a.nrows() < 2 {
                    return Err(config_err("graph.adjacency", "must be square with a leader and at least one follower"));
                }
                Ok(a)
            }
            (None, Some(l)) => {
                let l = matrix("graph.l_ff", l)?;
                if !l.is_square() {
                    return Err(config_err("graph.l_ff", "must be square"));
                }
                Ok(ddc_core::fixtures::adjacency_from_l_ff(&l))
            }
            _ => Err(config_err("graph", "give exactly one of adjacency or l_ff")),
        }
    }

    fn bound(&self, spec: &NoiseSpec, n: usize, t: usize) -> Result<NoiseBound, CliError> {
        let n11 = matrix("noise.n11", &spec.n11)?;
        if n11.shape() != (n, n) {
            return Err(config_err("noise.n11", format!("expected {n}x{n}")));
        }
        NoiseBound::new(n11, DMatrix::zeros(n, t), DMatrix::identity(t, t) * spec.n22_scale)
            .map_err(|e| config_err("noise", e))
    }
}
