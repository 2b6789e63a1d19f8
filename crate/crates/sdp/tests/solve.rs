use ddc_sdp::{AffineExpr, SdpProblem, SolveStatus};
use nalgebra::{dmatrix, DMatrix};
use proptest::prelude::*;

fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    m.clone().symmetric_eigenvalues().min() >= -tol
}

#[test]
fn min_trace_above_identity() {
    let mut p = SdpProblem::new();
    let x = p.symmetric("X", 1).unwrap();
    p.psd("X-I", x.expr().sub(&AffineExpr::identity(1)).unwrap()).unwrap();
    p.minimize(x.expr().trace().unwrap()).unwrap();
    let sol = p.solve().unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.scalar("X").unwrap() - 1.0).abs() < 1e-6);
    assert!((sol.objective_value.unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn feasibility_two_by_two() {
    let mut p = SdpProblem::new();
    let x = p.scalar("x").unwrap();
    let one = AffineExpr::scalar(1.0);
    let m = AffineExpr::block(vec![vec![x.expr(), one.clone()], vec![one, x.expr()]]).unwrap();
    p.psd("[[x,1],[1,x]]", m).unwrap();
    let sol = p.solve().unwrap();
    assert_eq!(sol.status, SolveStatus::Feasible);
    assert!(sol.scalar("x").unwrap() >= 1.0 - 1e-7);
}

/// Brute-force maximum of trace(P) over a grid of symmetric 2x2 P with
/// 0 ⪯ P ⪯ Q.
fn grid_max_trace(q: &DMatrix<f64>, steps: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let hi = q.max();
    for i in 0..=steps {
        let a = hi * i as f64 / steps as f64;
        for j in 0..=steps {
            let d = hi * j as f64 / steps as f64;
            for k in 0..=steps {
                let b = -hi + 2.0 * hi * k as f64 / steps as f64;
                let pm = dmatrix![a, b; b, d];
                if is_psd(&pm, 0.0) && is_psd(&(q - &pm), 0.0) {
                    best = best.max(a + d);
                }
            }
        }
    }
    best
}

#[test]
fn max_trace_below_q_matches_grid_oracle() {
    let q = dmatrix![2.0, 0.0; 0.0, 3.0];
    let oracle = grid_max_trace(&q, 60);
    assert!((oracle - 5.0).abs() < 1e-12);

    let mut p = SdpProblem::new();
    let pv = p.symmetric("P", 2).unwrap();
    p.psd("Q-P", AffineExpr::constant(q.clone()).sub(&pv.expr()).unwrap()).unwrap();
    p.psd("P", pv.expr()).unwrap();
    p.maximize(pv.expr().trace().unwrap()).unwrap();
    let sol = p.solve().unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let obj = sol.objective_value.unwrap();
    assert!((obj - oracle).abs() / oracle < 1e-5, "objective {obj}");
    assert!((sol.value("P").unwrap() - &q).norm() < 1e-5);
    assert!(sol.min_residual() >= -1e-7);
}

#[test]
fn unbounded_objective_is_reported() {
    let mut p = SdpProblem::new();
    let x = p.scalar("x").unwrap();
    p.psd("x >= 0", x.expr()).unwrap();
    p.maximize(x.expr()).unwrap();
    let sol = p.solve().unwrap();
    assert_eq!(sol.status, SolveStatus::NumericalFailure);
}

#[test]
fn unbounded_free_direction_with_bounded_objective() {
    // y can grow without limit but does not enter the objective
    let mut p = SdpProblem::new();
    let x = p.scalar("x").unwrap();
    let y = p.scalar("y").unwrap();
    p.psd("1 - x >= 0", AffineExpr::scalar(1.0).sub(&x.expr()).unwrap()).unwrap();
    p.psd("y >= x", y.expr().sub(&x.expr()).unwrap()).unwrap();
    p.maximize(x.expr()).unwrap();
    let sol = p.solve().unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.scalar("x").unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn contradictory_constraints_are_infeasible() {
    let mut p = SdpProblem::new();
    let x = p.symmetric("X", 2).unwrap();
    p.psd("X-I", x.expr().sub(&AffineExpr::identity(2)).unwrap()).unwrap();
    p.psd("-X", x.expr().neg()).unwrap();
    p.minimize(x.expr().trace().unwrap()).unwrap();
    let sol = p.solve().unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn equality_constraints_are_honoured() {
    // min trace(X) with X ⪰ 0, X11 = 2, and X off-diagonal forced to 1
    let mut p = SdpProblem::new();
    let x = p.symmetric("X", 2).unwrap();
    p.psd("X", x.expr()).unwrap();
    let e11 = x.expr().left_mul(&dmatrix![1.0, 0.0]).unwrap().right_mul(&dmatrix![1.0; 0.0]).unwrap();
    p.equal_zero("x11", e11.sub(&AffineExpr::scalar(2.0)).unwrap()).unwrap();
    let e12 = x.expr().left_mul(&dmatrix![1.0, 0.0]).unwrap().right_mul(&dmatrix![0.0; 1.0]).unwrap();
    p.equal_zero("x12", e12.sub(&AffineExpr::scalar(1.0)).unwrap()).unwrap();
    p.minimize(x.expr().trace().unwrap()).unwrap();
    let sol = p.solve().unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let xv = sol.value("X").unwrap();
    // X22 >= 1/2 for PSD, optimum 2.5
    assert!((xv[(0, 0)] - 2.0).abs() < 1e-9);
    assert!((xv[(0, 1)] - 1.0).abs() < 1e-9);
    assert!((sol.objective_value.unwrap() - 2.5).abs() < 1e-6);
}

#[test]
fn inconsistent_equalities_are_infeasible() {
    let mut p = SdpProblem::new();
    let x = p.scalar("x").unwrap();
    p.equal_zero("x=1", x.expr().sub(&AffineExpr::scalar(1.0)).unwrap()).unwrap();
    p.equal_zero("x=2", x.expr().sub(&AffineExpr::scalar(2.0)).unwrap()).unwrap();
    assert_eq!(p.solve().unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn asymmetric_constraint_rejected() {
    let mut p = SdpProblem::new();
    let x = p.matrix("X", 2, 2).unwrap();
    assert!(p.psd("X", x.expr()).is_err());
}

#[test]
fn two_hundred_scalar_unknowns() {
    // box-constrained linear program with 200 unknowns written as 1x1 LMIs
    let n = 200;
    let mut p = SdpProblem::new();
    let x = p.matrix("x", n, 1).unwrap();
    let lo = DMatrix::from_fn(n, 1, |i, _| (i % 7) as f64 - 3.0);
    let costs = DMatrix::from_fn(1, n, |_, j| 1.0 + (j % 5) as f64);
    for i in 0..n {
        let row = DMatrix::from_fn(1, n, |_, j| if i == j { 1.0 } else { 0.0 });
        let xi = x.expr().left_mul(&row).unwrap();
        p.psd(&format!("x{i}>=lo"), xi.sub(&AffineExpr::scalar(lo[(i, 0)])).unwrap()).unwrap();
    }
    p.minimize(x.expr().left_mul(&costs).unwrap()).unwrap();
    let sol = p.solve().unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let expected: f64 = (0..n).map(|i| costs[(0, i)] * lo[(i, 0)]).sum();
    let got = sol.objective_value.unwrap();
    assert!((got - expected).abs() / expected.abs() < 1e-5, "{got} vs {expected}");
}

#[test]
fn dump_lists_variables_and_trees() {
    let mut p = SdpProblem::new();
    let x = p.symmetric("X", 2).unwrap();
    let g = p.scalar("g").unwrap();
    p.psd("X-gI", x.expr().sub(&g.expr().scalar_times(&DMatrix::identity(2, 2)).unwrap()).unwrap())
        .unwrap();
    p.maximize(g.expr()).unwrap();
    let d = p.dump();
    assert!(d.contains("X symmetric 2"));
    assert!(d.contains("g scalar"));
    assert!(d.contains("(- X (scalar* g const[2x2]))"));
    assert!(d.contains("objective maximize"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Random diagonal instances: max trace(P) s.t. 0 ⪯ P ⪯ diag(q) has
    /// optimum Σ q_i.
    #[test]
    fn diagonal_instances_match_closed_form(q in proptest::collection::vec(0.1f64..10.0, 1..5)) {
        let n = q.len();
        let qm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(q.clone()));
        let mut p = SdpProblem::new();
        let pv = p.symmetric("P", n).unwrap();
        p.psd("Q-P", AffineExpr::constant(qm.clone()).sub(&pv.expr()).unwrap()).unwrap();
        p.psd("P", pv.expr()).unwrap();
        p.maximize(pv.expr().trace().unwrap()).unwrap();
        let sol = p.solve().unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        let expected: f64 = q.iter().sum();
        prop_assert!((sol.objective_value.unwrap() - expected).abs() / expected < 1e-5);
        prop_assert!(sol.min_residual() >= -1e-7);
    }

    /// Returned points always satisfy the constraint residual bound.
    #[test]
    fn lower_bounded_min_trace(c in proptest::collection::vec(0.2f64..5.0, 2..4), shift in -2.0f64..2.0) {
        let n = c.len();
        let cm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(c.clone()));
        let mut p = SdpProblem::new();
        let x = p.symmetric("X", n).unwrap();
        let lb = DMatrix::identity(n, n) * shift;
        p.psd("X-lb", x.expr().sub(&AffineExpr::constant(lb)).unwrap()).unwrap();
        p.minimize(x.expr().left_mul(&cm).unwrap().trace().unwrap()).unwrap();
        let sol = p.solve().unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        prop_assert!(sol.min_residual() >= -1e-7);
        let expected: f64 = c.iter().sum::<f64>() * shift;
        prop_assert!((sol.objective_value.unwrap() - expected).abs() <= 1e-5 * expected.abs().max(1.0));
    }
}

/// Solution of `P - Aᵀ P A = I` through the vectorized linear system.
fn lyapunov_oracle(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let at = a.transpose();
    let kron = at.kronecker(&at);
    let lhs = DMatrix::identity(n * n, n * n) - kron;
    let rhs = nalgebra::DVector::from_column_slice(DMatrix::<f64>::identity(n, n).as_slice());
    let v = lhs.lu().solve(&rhs).unwrap();
    DMatrix::from_column_slice(n, n, v.as_slice())
}

fn lyapunov_sdp(a: &DMatrix<f64>) -> (SolveStatus, DMatrix<f64>) {
    let n = a.nrows();
    let mut p = SdpProblem::new();
    let pv = p.symmetric("P", n).unwrap();
    let apa = pv.expr().left_mul(&a.transpose()).unwrap().right_mul(a).unwrap();
    let lmi = pv.expr().sub(&apa).unwrap().sub(&AffineExpr::identity(n)).unwrap();
    p.psd("P-APA-I", lmi).unwrap();
    p.minimize(pv.expr().trace().unwrap()).unwrap();
    let sol = p.solve().unwrap();
    (sol.status, sol.value("P").unwrap().clone())
}

#[test]
fn lyapunov_minimum_trace_matches_linear_solve() {
    let a = dmatrix![0.5, 0.4, 0.0; -0.3, 0.6, 0.2; 0.1, 0.0, 0.7];
    let (status, pm) = lyapunov_sdp(&a);
    assert_eq!(status, SolveStatus::Optimal);
    let oracle = lyapunov_oracle(&a);
    assert!((&pm - &oracle).norm() / oracle.norm() < 1e-6, "{pm} vs {oracle}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_lyapunov_instances(entries in proptest::collection::vec(-1.0f64..1.0, 9), radius in 0.1f64..0.9) {
        let raw = DMatrix::from_row_slice(3, 3, &entries);
        let rho = raw.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max);
        prop_assume!(rho > 1e-3);
        let a = raw * (radius / rho);
        let (status, pm) = lyapunov_sdp(&a);
        prop_assert_eq!(status, SolveStatus::Optimal);
        let oracle = lyapunov_oracle(&a);
        prop_assert!((&pm - &oracle).norm() / oracle.norm() < 1e-5);
    }
}
