//! The six-agent benchmark network: a lightly damped rotation plant, five
//! followers with an undirected follower subgraph and three followers
//! pinned to the leader.

use nalgebra::{dmatrix, DMatrix};

use crate::plant::{NoiseBound, Plant};

pub fn sec6_plant() -> Plant {
    Plant::new(dmatrix![0.707, 0.707; -0.707, 0.707], dmatrix![0.2, 0.0; 0.0, 0.2]).expect("fixture dimensions")
}

/// Follower Laplacian block of the benchmark network.
pub fn sec6_l_ff() -> DMatrix<f64> {
    dmatrix![
        3.0, -1.0, -2.0, 0.0, 0.0;
        -1.0, 10.0, -1.0, -3.0, 0.0;
        -2.0, -1.0, 10.0, 0.0, -2.0;
        0.0, -3.0, 0.0, 10.0, -2.0;
        0.0, 0.0, -2.0, -2.0, 4.0
    ]
}

/// Full 6×6 adjacency: follower weights are the negated off-diagonal of
/// `L_ff`, leader weights are the remaining diagonal mass.
pub fn sec6_adjacency() -> DMatrix<f64> {
    adjacency_from_l_ff(&sec6_l_ff())
}

pub fn adjacency_from_l_ff(l_ff: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l_ff.nrows();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i != j {
                a[(i + 1, j + 1)] = -l_ff[(i, j)];
                off -= l_ff[(i, j)];
            }
        }
        a[(i + 1, 0)] = l_ff[(i, i)] - off;
    }
    a
}

/// `N11 = 0.1 I_n`, `N12 = 0`, `N22 = -I_T`.
pub fn sec6_noise_bound(n: usize, horizon: usize) -> NoiseBound {
    NoiseBound::new(
        DMatrix::identity(n, n) * 0.1,
        DMatrix::zeros(n, horizon),
        -DMatrix::identity(horizon, horizon),
    )
    .expect("fixture bound is valid")
}
