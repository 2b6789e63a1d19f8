use ddc_core::fixtures::*;
use ddc_core::netgraph::*;
use ddc_core::plant::*;
use ddc_core::sim::*;
use ddc_core::synth::*;
use ddc_core::CoreError;
use nalgebra::{dmatrix, Complex, DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn leader_record(plant: &Plant, t: usize, seed: u64) -> DataRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    collect_data(plant, t, &InputPolicy::default(), &NoisePolicy::Zero, None, &mut rng).unwrap()
}

fn sec6_graph() -> NetworkGraph {
    build_graph(&sec6_adjacency(), GraphOptions { require_leader_root: true, undirected_followers: true }).unwrap()
}

/// Dense grid over `(0, hmax]` followed by ternary refinement around the best cell.
fn grid_ratio(eigs: &[Complex<f64>]) -> (f64, f64) {
    let f = |h: f64| eigs.iter().map(|l| (l - h).norm()).fold(0.0, f64::max) / h;
    let hmax = 10.0 * eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let cells = 20_000;
    let step = hmax / cells as f64;
    let best = (1..=cells).min_by(|a, b| f(*a as f64 * step).total_cmp(&f(*b as f64 * step))).unwrap();
    let (mut lo, mut hi) = ((best as f64 - 1.0) * step, (best as f64 + 1.0) * step);
    lo = lo.max(1e-12);
    for _ in 0..200 {
        let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let h = 0.5 * (lo + hi);
    (h, f(h))
}

fn random_x0s(rng: &mut ChaCha8Rng, agents: usize, n: usize) -> Vec<DVector<f64>> {
    (0..agents).map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))).collect()
}

#[test]
fn scalar_leader_closed_form() {
    let plant = Plant::new(dmatrix![0.5], dmatrix![1.0]).unwrap();
    let rec = leader_record(&plant, 6, 3);
    let s = leader_gain(&rec, &dmatrix![1.0]).unwrap();
    assert!((s.k0[(0, 0)] + 0.5).abs() < 1e-6);
    assert!((s.p_mat[(0, 0)] - 1.0).abs() < 1e-6);
    assert!((s.theta - 0.25).abs() < 1e-6);
}

#[test]
fn sec6_theta_matches_true_plant() {
    let plant = sec6_plant();
    let rec = leader_record(&plant, 15, 11);
    let q = DMatrix::identity(2, 2);
    let s = leader_gain(&rec, &q).unwrap();
    assert!((&s.p_mat - &q).amax() < 1e-6);
    let bk = &plant.b * &s.k0;
    assert!((&rec.x_plus * &s.m - &bk).amax() < 1e-6);
    assert!((&bk + &plant.a).amax() < 1e-6);
    let from_plant = (bk.transpose() * &s.p_mat * &bk).symmetric_eigenvalues().max();
    assert!((s.theta - from_plant).abs() < 1e-5);
    let ata = (plant.a.transpose() * &plant.a).symmetric_eigenvalues().max();
    assert!((s.theta - ata).abs() < 1e-5);
}

#[test]
fn zero_theta_has_unbounded_limit() {
    let c = enclosing_circle(&[Complex::new(0.4, 0.0), Complex::new(1.9, 0.0)], 0.0).unwrap();
    assert!(c.limit.is_infinite() && c.margin().is_infinite());
}

#[test]
fn conjugate_pair_against_closed_form() {
    let eigs = [Complex::new(1.0, 0.5), Complex::new(1.0, -0.5)];
    // ratio² = 1.25u² − 2u + 1 with u = 1/h, minimized at u = 0.8
    let c = enclosing_circle(&eigs, 4.0).unwrap();
    assert!((c.h0 - 1.25).abs() < 1e-6);
    assert!((c.ratio - 0.2f64.sqrt()).abs() < 1e-9);
    assert!((c.limit - 0.5).abs() < 1e-15);
    let (gh, gr) = grid_ratio(&eigs);
    assert!((c.ratio - gr).abs() < 1e-8 && (c.h0 - gh).abs() < 1e-4);
    assert!(matches!(enclosing_circle(&eigs, 6.0), Err(CoreError::CircleInfeasible { .. })));
}

#[test]
fn spectrum_touching_the_imaginary_axis_is_rejected() {
    let eigs = [Complex::new(0.0, 1.0), Complex::new(0.0, -1.0)];
    assert!(matches!(enclosing_circle(&eigs, 0.1), Err(CoreError::CircleInfeasible { .. })));
}

#[test]
fn one_step_of_gain_broadcast() {
    let adj = dmatrix![0.0, 0.0; 2.0, 0.0];
    let g = build_graph(&adj, GraphOptions::default()).unwrap();
    let plant = sec6_plant();
    let k0 = dmatrix![1.0, -2.0; 0.5, 3.0];
    let table = leader_protocol_gains(&k0, 1.5, 1);
    let x0s = vec![DVector::from_element(2, 1.0), DVector::zeros(2)];
    let tr = run_leader_protocol(&plant, &g, &table.gains, &table.couplings, &x0s, 1).unwrap();
    let w10 = 2.0 / 3.0;
    assert!((&tr.gains[1][0] - &k0 * w10).amax() < 1e-15);
    assert!((tr.couplings[1][0] - 1.5 * w10).abs() < 1e-15);
    assert_eq!(tr.gains[0][0], DMatrix::zeros(2, 2));
}

#[test]
fn gains_initialized_at_leader_values_stay_put() {
    let g = sec6_graph();
    let plant = sec6_plant();
    let k0 = dmatrix![-0.7, -0.7; 0.7, -0.7];
    let gains = vec![k0.clone(); 6];
    let couplings = vec![0.9; 6];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tr = run_leader_protocol(&plant, &g, &gains, &couplings, &random_x0s(&mut rng, 6, 2), 40).unwrap();
    for t in 0..=40 {
        assert!(tr.gains[t].iter().all(|k| (k - &k0).amax() == 0.0));
        assert!(tr.couplings[t].iter().all(|c| *c == 0.9));
    }
    assert!(tr.gain_disagreement.iter().all(|d| *d == 0.0));
}

#[test]
fn sec6_leader_pipeline_reaches_consensus() {
    let plant = sec6_plant();
    let g = sec6_graph();
    let eigs = weighted_graph_matrix(&g).unwrap().eigenvalues;
    let rec = leader_record(&plant, 15, 7);
    let s = leader_gain(&rec, &DMatrix::identity(2, 2)).unwrap();
    let circle = enclosing_circle(&eigs, s.theta).unwrap();
    assert!(circle.ratio < circle.limit && circle.c0 > 0.0);
    assert!(certify_network(&plant, &eigs, &s.k0, circle.c0));

    let table = leader_protocol_gains(&s.k0, circle.c0, g.followers());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tr = run_leader_protocol(&plant, &g, &table.gains, &table.couplings, &random_x0s(&mut rng, 6, 2), DEFAULT_HORIZON).unwrap();
    assert!(tr.final_error() < CONSENSUS_TOL);

    let floor = 1e-10 * s.k0.norm();
    let fit = fit_log_linear(&tr.gain_disagreement, 10, 200, floor).unwrap();
    assert!(fit.rate() < 1.0 && fit.r_squared >= 0.99, "{fit:?}");

    // couplings approach c0 without overshoot on this tree
    for i in 0..g.followers() {
        let gap: Vec<f64> = tr.couplings.iter().map(|c| (circle.c0 - c[i]).abs()).collect();
        assert!(gap.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(tr.couplings.iter().all(|c| c[i] <= circle.c0 + 1e-15));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn real_interval_ratio_closed_form(a in 0.05f64..2.0, width in 0.0f64..3.0, inner in proptest::collection::vec(0.0f64..1.0, 0..6)) {
        let b = a + width;
        let mut eigs = vec![Complex::new(a, 0.0), Complex::new(b, 0.0)];
        eigs.extend(inner.iter().map(|s| Complex::new(a + s * width, 0.0)));
        let (h, ratio) = best_center(&eigs);
        prop_assert!((ratio - (b - a) / (b + a)).abs() < 1e-8);
        prop_assert!((h - 0.5 * (a + b)).abs() < 1e-6 * (a + b));
    }

    #[test]
    fn conjugate_spectra_match_grid(re in proptest::collection::vec(0.1f64..2.0, 1..4), im in proptest::collection::vec(0.0f64..1.0, 1..4)) {
        let eigs: Vec<Complex<f64>> = re.iter().zip(&im).flat_map(|(r, i)| [Complex::new(*r, *i), Complex::new(*r, -*i)]).collect();
        let (_, ratio) = best_center(&eigs);
        let (_, grid) = grid_ratio(&eigs);
        prop_assert!((ratio - grid).abs() < 1e-8, "golden {} grid {}", ratio, grid);
    }
}
