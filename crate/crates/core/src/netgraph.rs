//! Leader-follower topology and the graph matrices the protocols use.
//!
//! Node 0 is the leader, nodes `1..=N` are followers. `a_ij > 0` means
//! node `i` receives information from node `j`.

use std::collections::VecDeque;

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::linalg::symmetrize;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphOptions {
    /// Reject graphs where the leader listens to anyone.
    pub require_leader_root: bool,
    /// Require `a_ij = a_ji` among followers.
    pub undirected_followers: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self { require_leader_root: true, undirected_followers: false }
    }
}

#[derive(Debug, Clone)]
pub struct NetworkGraph {
    pub adjacency: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub l_ff: DMatrix<f64>,
    pub l_fl: DVector<f64>,
    /// `d_i = Σ_j a_ij` for every node, leader included.
    pub degrees: DVector<f64>,
    /// Largest follower-only in-degree.
    pub z: f64,
}

impl NetworkGraph {
    pub fn followers(&self) -> usize {
        self.adjacency.nrows() - 1
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    /// Follower block of the adjacency matrix.
    pub fn follower_adjacency(&self) -> DMatrix<f64> {
        let n = self.followers();
        self.adjacency.view((1, 1), (n, n)).into_owned()
    }

    pub fn followers_symmetric(&self) -> bool {
        let a = self.follower_adjacency();
        let scale = a.amax().max(1.0);
        (&a - a.transpose()).amax() <= SYMMETRY_TOL * scale
    }
}

pub fn build_graph(weights: &DMatrix<f64>, opts: GraphOptions) -> Result<NetworkGraph> {
    let (r, c) = weights.shape();
    if r != c || r == 0 {
        return Err(CoreError::NonSquare { rows: r, cols: c });
    }
    for i in 0..r {
        for j in 0..r {
            let w = weights[(i, j)];
            if !(w >= 0.0) || !w.is_finite() {
                return Err(CoreError::NegativeWeight { i, j, weight: w });
            }
        }
        if weights[(i, i)] != 0.0 {
            return Err(CoreError::NonZeroDiagonal(i));
        }
    }
    if opts.require_leader_root && weights.row(0).iter().any(|w| *w > 0.0) {
        return Err(CoreError::LeaderHasInEdges);
    }
    if opts.undirected_followers {
        for i in 1..r {
            for j in (i + 1)..r {
                let (a, b) = (weights[(i, j)], weights[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * a.max(b).max(1.0) {
                    return Err(CoreError::AsymmetricFollowers { i, j });
                }
            }
        }
    }

    let degrees = DVector::from_fn(r, |i, _| weights.row(i).sum());
    let laplacian = DMatrix::from_diagonal(&degrees) - weights;
    let n = r - 1;
    let l_ff = laplacian.view((1, 1), (n, n)).into_owned();
    let l_fl = laplacian.view((1, 0), (n, 1)).column(0).into_owned();
    let z = (1..r).map(|i| (1..r).map(|j| weights[(i, j)]).sum::<f64>()).fold(0.0, f64::max);
    Ok(NetworkGraph { adjacency: weights.clone(), laplacian, l_ff, l_fl, degrees, z })
}

/// Builds the adjacency from `(from, to, weight)` triples over `nodes`
/// nodes; `mirror_followers` also adds the reverse of follower-follower edges.
pub fn adjacency_from_edges(nodes: usize, edges: &[(usize, usize, f64)], mirror_followers: bool) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(nodes, nodes);
    for &(from, to, w) in edges {
        if from >= nodes || to >= nodes {
            return Err(CoreError::DimensionMismatch(format!("edge ({from}, {to}) outside {nodes} nodes")));
        }
        a[(to, from)] = w;
        if mirror_followers && from > 0 && to > 0 {
            a[(from, to)] = w;
        }
    }
    Ok(a)
}

pub fn has_leader_spanning_tree(g: &NetworkGraph) -> bool {
    let n = g.adjacency.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !seen[i] && g.adjacency[(i, j)] > 0.0 {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    seen.iter().all(|s| *s)
}

/// Whether followers form one component when edge directions are ignored.
pub fn followers_connected(g: &NetworkGraph) -> bool {
    let n = g.followers();
    if n <= 1 {
        return true;
    }
    let a = g.follower_adjacency();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !seen[i] && (a[(i, j)] > 0.0 || a[(j, i)] > 0.0) {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    seen.iter().all(|s| *s)
}

#[derive(Debug, Clone)]
pub struct WeightedGraphMatrix {
    pub l_bar: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    /// True when the spectrum came from the symmetric similarity transform.
    pub real_spectrum: bool,
}

impl WeightedGraphMatrix {
    /// Largest `|λ - 1|` over the spectrum.
    pub fn max_deviation_from_one(&self) -> f64 {
        self.eigenvalues.iter().map(|l| (l - Complex::new(1.0, 0.0)).norm()).fold(0.0, f64::max)
    }
}

/// `L̄ = (I + D_ff)^{-1} L_ff` with `D_ff` the follower in-degrees.
pub fn weighted_graph_matrix(g: &NetworkGraph) -> Result<WeightedGraphMatrix> {
    let n = g.followers();
    let scale = DVector::from_fn(n, |i, _| 1.0 / (1.0 + g.degrees[i + 1]));
    let mut l_bar = g.l_ff.clone();
    for i in 0..n {
        l_bar.row_mut(i).scale_mut(scale[i]);
    }
    if g.followers_symmetric() {
        let s = DVector::from_fn(n, |i, _| scale[i].sqrt());
        let sym = DMatrix::from_fn(n, n, |i, j| s[i] * g.l_ff[(i, j)] * s[j]);
        let mut eig: Vec<f64> = symmetrize(&sym).symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let eigenvalues = eig.into_iter().map(|l| Complex::new(l, 0.0)).collect();
        return Ok(WeightedGraphMatrix { l_bar, eigenvalues, real_spectrum: true });
    }
    let eigenvalues = general_eigenvalues(&l_bar)?;
    Ok(WeightedGraphMatrix { l_bar, eigenvalues, real_spectrum: false })
}

pub(crate) fn general_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let schur = Schur::try_new(m.clone(), 1e-14, 10_000).ok_or_else(|| CoreError::EigenFailure("QR iteration did not converge".into()))?;
    let mut ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

#[derive(Debug, Clone)]
pub struct RowStochasticDff {
    pub d_ff: DMatrix<f64>,
    /// Largest modulus among the eigenvalues other than the one closest to 1.
    pub mu: f64,
    /// Set when there is nothing to average (`μ` is reported as 1).
    pub degenerate: bool,
}

pub fn row_stochastic_dff(g: &NetworkGraph) -> Result<RowStochasticDff> {
    let n = g.followers();
    let a = g.follower_adjacency();
    let denom = 1.0 + g.z;
    let mut d_ff = a / denom;
    for i in 0..n {
        let off: f64 = d_ff.row(i).sum();
        d_ff[(i, i)] = 1.0 - off;
    }
    let no_edges = g.follower_adjacency().iter().all(|w| *w == 0.0);
    if n == 1 || no_edges {
        return Ok(RowStochasticDff { d_ff, mu: 1.0, degenerate: true });
    }
    let eig: Vec<Complex<f64>> = if g.followers_symmetric() {
        symmetrize(&d_ff).symmetric_eigenvalues().iter().map(|l| Complex::new(*l, 0.0)).collect()
    } else {
        general_eigenvalues(&d_ff)?
    };
    let one = Complex::new(1.0, 0.0);
    let skip = (0..eig.len())
        .min_by(|&x, &y| {
            let (dx, dy) = ((eig[x] - one).norm(), (eig[y] - one).norm());
            dx.total_cmp(&dy).then(eig[y].re.total_cmp(&eig[x].re))
        })
        .expect("nonempty spectrum");
    let mu = eig.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, l)| l.norm()).fold(0.0, f64::max);
    Ok(RowStochasticDff { d_ff, mu, degenerate: false })
}
