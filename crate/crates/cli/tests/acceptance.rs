//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use ddc_cli::report::{ExperimentReport, Outcome};
use ddc_cli::{run_experiment, ExperimentConfig, Mode};
use ddc_core::fixtures::{sec6_l_ff, sec6_noise_bound, sec6_plant};
use ddc_core::netgraph::{build_graph, row_stochastic_dff, GraphOptions};
use ddc_core::plant::{
    collect_data, default_horizon, noise_quadratic, read_matrix_csv, read_record_csv, InputPolicy, NoisePolicy, Plant,
};
use ddc_core::sim::{certify_network, is_schur};
use ddc_core::synth::{gain_consensus_matrix, riccati_from_data, sample_consistent_system, synthesize_agent};
use nalgebra::{dmatrix, Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const SEED: u64 = 7;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

struct Run {
    dir: TempDir,
    report: ExperimentReport,
    seconds: f64,
}

fn run(mode: Mode, seed: u64) -> Run {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut cfg = ExperimentConfig::sec6(mode, seed);
    cfg.output = Some(dir.path().to_path_buf());
    let t0 = Instant::now();
    let report = run_experiment(&cfg).expect("fixture run");
    Run { dir, report, seconds: t0.elapsed().as_secs_f64() }
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).expect("csv");
    r.records().map(|rec| rec.expect("row").iter().map(|v| v.parse().expect("number")).collect()).collect()
}

fn error_series(run: &Run) -> Vec<Vec<f64>> {
    read_csv(&run.dir.path().join("plot/error.csv"))
}

/// First step from which the consensus error stays below `tol`.
fn settles_within(run: &Run, tol: f64, steps: usize) -> Option<usize> {
    let e: Vec<f64> = error_series(run).iter().map(|r| r[1]).collect();
    let k = e.iter().rposition(|v| *v >= tol).map_or(0, |k| k + 1);
    (k <= steps && k < e.len()).then_some(k)
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

/// Spectral radius from the eigenvalues of the real Schur form.
fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone().complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Real block form of the complex matrix `A + s λ B K`.
fn modal(plant: &Plant, k: &DMatrix<f64>, s: f64, l: Complex<f64>) -> DMatrix<f64> {
    let bk = &plant.b * k;
    let re = &plant.a + &bk * (s * l.re);
    let im = &bk * (s * l.im);
    let n = plant.n();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&re);
    m.view_mut((n, n), (n, n)).copy_from(&re);
    m.view_mut((0, n), (n, n)).copy_from(&(-&im));
    m.view_mut((n, 0), (n, n)).copy_from(&im);
    m
}

fn sym_eigs(m: &DMatrix<f64>) -> Vec<f64> {
    let s = (m + m.transpose()) * 0.5;
    let mut e: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Stabilizing solution of `P = AᵀPA − AᵀPB(BᵀPB)⁻¹BᵀPA + Q` by value iteration.
fn riccati_oracle(plant: &Plant, q: &DMatrix<f64>) -> DMatrix<f64> {
    let (a, b) = (&plant.a, &plant.b);
    let mut p = q.clone();
    for _ in 0..2000 {
        let apb = a.transpose() * &p * b;
        let inv = (b.transpose() * &p * b).try_inverse().expect("BᵀPB invertible");
        let next = a.transpose() * &p * a - &apb * inv * apb.transpose() + q;
        p = (&next + next.transpose()) * 0.5;
    }
    p
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-13 * hi.max(1.0) {
        let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(x1) <= f(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    f(0.5 * (lo + hi))
}

fn criterion_1() -> Verdict {
    let t0 = Instant::now();
    let r = run(Mode::Noiseless, SEED);
    let eigs = &r.report.graph.l_bar_eigenvalues;
    let dev = eigs.iter().map(|l| Complex::new(l[0], l[1]) - 1.0).map(|d| d.norm()).fold(0.0, f64::max);
    let a = dev <= 0.3 + 1e-9;
    let region = r.report.noiseless.as_ref().and_then(|s| s.region.as_ref());
    let bound = region.map_or(f64::NAN, |g| g.bound);
    let b = region.is_some_and(|g| g.verified) && (0.09..=1.2).contains(&bound) && r.report.data_horizon == 15;
    let c = settles_within(&r, 1e-3, 500);
    let secs = t0.elapsed().as_secs_f64();
    Verdict::new(
        a && b && c.is_some() && secs < 30.0,
        format!(
            "(a) max |λ-1| = {dev:.4} vs 0.3: {}; (b) bound = {bound:.4}, verified: {}; (c) settles at {c:?}; {secs:.2}s",
            if a { "ok" } else { "outside the circle" },
            b
        ),
    )
}

fn criterion_2() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_cl, mut worst_p) = (0.0f64, 0.0f64);
    for case in 0..20 {
        let n = 1 + case % 4;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &a * (rng.random_range(0.5..1.3) / spectral_radius(&a).max(1e-3));
        let b = loop {
            let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let sv = b.singular_values();
            if sv.min() > 0.2 * sv.max() {
                break b;
            }
        };
        let plant = Plant::new(a, b).expect("plant");
        let q = DMatrix::identity(n, n);
        let rec = collect_data(&plant, default_horizon(n, n), &InputPolicy::default(), &NoisePolicy::Zero, None, &mut rng)
            .expect("data");
        let s = synthesize_agent(&rec, &q).expect("synthesis");
        worst_cl = worst_cl.max((&plant.a + &plant.b * &s.k0).norm());
        worst_p = worst_p.max((&s.p_mat - &q).norm() / q.norm());
    }
    let secs = t0.elapsed().as_secs_f64();
    Verdict::new(
        worst_cl <= 1e-3 && worst_p <= 1e-3 && secs < 60.0,
        format!("20 plants: max ‖A+BK‖ = {worst_cl:.2e}, max ‖P-Q‖/‖Q‖ = {worst_p:.2e}; {secs:.2}s"),
    )
}

fn criterion_3(runs: &[&Run]) -> Verdict {
    let mut worst = 0.0f64;
    let mut count = 0;
    for r in runs {
        for a in &r.report.agents {
            if let Some(res) = a.are_residual {
                worst = worst.max(res);
                count += 1;
            }
        }
    }
    // Scalar plant against value iteration on the true plant.
    let plant = Plant::new(dmatrix![1.2], dmatrix![1.0]).expect("plant");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rec = collect_data(&plant, 6, &InputPolicy::default(), &NoisePolicy::Zero, None, &mut rng).expect("data");
    let q = dmatrix![1.0];
    let s = synthesize_agent(&rec, &q).expect("synthesis");
    let p = riccati_from_data(&rec, &s.gamma, &q).expect("riccati");
    let oracle = riccati_oracle(&plant, &q);
    worst = worst.max((&p - &oracle).norm());
    count += 1;
    Verdict::new(worst <= 1e-5 && count > 0, format!("{count} agents, max residual {worst:.2e}"))
}

fn criterion_4() -> Verdict {
    let graph = build_graph(&dmatrix![0.0, 0.0, 0.0; 1.0, 0.0, 1.0; 1.0, 1.0, 0.0], GraphOptions::default()).expect("graph");
    let dff = row_stochastic_dff(&graph).expect("D_ff");
    let g = gain_consensus_matrix(&dff, &dmatrix![1.0], &dmatrix![1.0], Some(0.0));
    match g {
        Ok(g) => {
            let phi = (1.0 + 5f64.sqrt()) / 2.0;
            let (l, o) = (g.lambda_mat[(0, 0)], g.o_gain[(0, 0)]);
            Verdict::new(
                (l - phi).abs() <= 1e-4 && (o + (phi - 1.0)).abs() <= 1e-4,
                format!("μ = {:.1e}, Λ = {l:.6}, O = {o:.6}", dff.mu),
            )
        }
        Err(e) => Verdict::new(false, e.to_string()),
    }
}

fn criterion_5(r: &Run) -> Verdict {
    let plant = sec6_plant();
    let l = sym_eigs(&sec6_l_ff());
    let alpha = 2.0 / (l[0] + l[l.len() - 1]);
    let rep = &r.report;
    let feasible = rep.agents.len() == 6 && rep.agents.iter().all(|a| a.lmi.as_ref().is_some_and(|m| m.margin > 0.0));
    let alpha_ok = rep.noisy.as_ref().is_some_and(|s| (s.alpha - alpha).abs() < 1e-12);
    let k0 = matrix(&read_csv_matrix(r, "gains/node0_k0.csv"));
    let rho = l.iter().map(|lk| spectral_radius(&(&plant.a + &plant.b * &k0 * (alpha * lk)))).fold(0.0, f64::max);
    let harness = rep.certification.as_ref().is_some_and(|c| c.certified);
    let settle = settles_within(r, 1e-3, 500);
    Verdict::new(
        feasible && alpha_ok && rho < 1.0 && harness && settle.is_some() && r.seconds < 60.0,
        format!(
            "LMIs feasible for 6 agents: {feasible}; α = {alpha:.6}; max ρ = {rho:.4}; settles at {settle:?}; {:.2}s",
            r.seconds
        ),
    )
}

fn read_csv_matrix(r: &Run, rel: &str) -> Vec<Vec<f64>> {
    let m = read_matrix_csv(&r.dir.path().join(rel)).expect("matrix csv");
    m.row_iter().map(|row| row.iter().copied().collect()).collect()
}

fn criterion_6(r: &Run) -> Verdict {
    let plant = sec6_plant();
    let rec = read_record_csv(&r.dir.path().join("data"), "node0").expect("leader data");
    let bound = sec6_noise_bound(plant.n(), rec.horizon());
    let k0 = matrix(&read_csv_matrix(r, "gains/node0_k0.csv"));
    let l = sym_eigs(&sec6_l_ff());
    let alpha = 2.0 / (l[0] + l[l.len() - 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let (mut consistent, mut schur, mut worst) = (0, 0, 0.0f64);
    for _ in 0..50 {
        let Ok((a, b)) = sample_consistent_system(&plant, &rec, &bound, &mut rng) else { continue };
        let d = &rec.x_plus - &a * &rec.x_minus - &b * &rec.u_minus;
        if sym_eigs(&noise_quadratic(&d, &bound))[0] >= -1e-9 {
            consistent += 1;
        }
        let member = Plant::new(a, b).expect("member");
        let rho = l.iter().map(|lk| spectral_radius(&modal(&member, &k0, alpha, Complex::new(*lk, 0.0)))).fold(0.0, f64::max);
        worst = worst.max(rho);
        if rho < 1.0 {
            schur += 1;
        }
    }
    let reported = r.report.noisy.as_ref().and_then(|s| s.robust_certified) == Some(true);
    Verdict::new(
        consistent == 50 && schur == 50 && reported,
        format!("{consistent}/50 consistent, {schur}/50 Schur (worst ρ = {worst:.4}), pipeline check: {reported}"),
    )
}

fn criterion_7(r: &Run) -> Verdict {
    let plant = sec6_plant();
    let Some(leader) = r.report.leader.as_ref() else { return Verdict::new(false, "no leader section") };
    let k0 = matrix(&read_csv_matrix(r, "gains/node0_k0.csv"));
    let p = riccati_oracle(&plant, &DMatrix::identity(2, 2));
    let bk = &plant.b * &k0;
    let theta = *sym_eigs(&(bk.transpose() * &p * &bk)).last().expect("eigs");
    let eigs: Vec<Complex<f64>> = r.report.graph.l_bar_eigenvalues.iter().map(|l| Complex::new(l[0], l[1])).collect();
    let ratio = |h: f64| eigs.iter().map(|l| (l - h).norm() / h).fold(0.0, f64::max);
    let hi = 4.0 * eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let oracle = golden_section(ratio, 1e-9, hi);
    let holds = leader.limit.is_none_or(|lim| leader.ratio < lim);
    let settle = settles_within(r, 1e-3, 500);
    let pass = (leader.theta - theta).abs() <= 1e-5 && (leader.ratio - oracle).abs() <= 1e-8 && (!holds || settle.is_some());
    Verdict::new(
        pass,
        format!(
            "θ = {:.8} vs {theta:.8}; ratio = {:.10} vs {oracle:.10}; circle holds: {holds}; settles at {settle:?}",
            leader.theta, leader.ratio
        ),
    )
}

/// Least-squares fit of `ln y = a + b t`, returning `(b, R²)`.
fn log_linear(points: &[(f64, f64)]) -> (f64, f64) {
    let m = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y.ln()));
    let (mx, my) = (sx / m, sy / m);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in points {
        let (dx, dy) = (t - mx, y.ln() - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    (slope, (sxy * sxy) / (sxx * syy))
}

fn criterion_8(runs: &[&Run]) -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for r in runs {
        let rows = error_series(r);
        let target = matrix(&r.report.simulation.as_ref().expect("simulation").target_gain).norm();
        let floor = 1e-10 * target.max(1.0);
        let pts: Vec<(f64, f64)> =
            rows.iter().filter(|row| (10.0..=200.0).contains(&row[0]) && row[2] > floor).map(|row| (row[0], row[2])).collect();
        if pts.len() < 3 {
            pass = false;
            details.push(format!("seed {}: only {} samples above floor", r.report.seed, pts.len()));
            continue;
        }
        let (slope, r2) = log_linear(&pts);
        pass &= slope < 0.0 && r2 >= 0.99;
        details.push(format!("seed {}: slope {slope:.4}, R² {r2:.4} over {} samples", r.report.seed, pts.len()));
    }
    Verdict::new(pass, details.join("; "))
}

fn criterion_9(reached: &[&Run]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut agree, mut total) = (0, 0);
    while total < 1000 {
        let n = rng.random_range(1..=5);
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let rho = spectral_radius(&m);
        if rho == 0.0 {
            continue;
        }
        let m = m * (rng.random_range(0.5..1.5) / rho);
        let rho = spectral_radius(&m);
        if (rho - 1.0).abs() < 1e-6 {
            continue;
        }
        total += 1;
        if is_schur(&m) == (rho < 1.0) {
            agree += 1;
        }
    }
    let plant = sec6_plant();
    let mut fixture_ok = true;
    for r in reached {
        let c = r.report.certification.as_ref().expect("certification");
        let eigs: Vec<Complex<f64>> = c.modes.iter().map(|m| Complex::new(m.lambda[0], m.lambda[1])).collect();
        fixture_ok &= certify_network(&plant, &eigs, &matrix(&c.gain), c.scale);
    }
    let unstable = Plant::new(&plant.a * 1.1, plant.b.clone()).expect("plant");
    let l: Vec<Complex<f64>> = sym_eigs(&sec6_l_ff()).into_iter().map(|x| Complex::new(x, 0.0)).collect();
    let zeroed = certify_network(&unstable, &l, &DMatrix::zeros(2, 2), 1.0);
    Verdict::new(
        agree == 1000 && fixture_ok && !zeroed,
        format!("is_schur agrees on {agree}/1000; fixtures certified: {fixture_ok}; zero gain on unstable A certified: {zeroed}"),
    )
}

fn criterion_10() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for mode in [Mode::Noiseless, Mode::Noisy, Mode::LeaderOnly] {
        let (a, b) = (run(mode, 21), run(mode, 21));
        let files: Vec<&String> = a.report.manifest.iter().filter(|f| f.ends_with(".csv") || *f == ddc_cli::REPORT_FILE).collect();
        let same = a.report.manifest == b.report.manifest
            && files.iter().all(|f| std::fs::read(a.dir.path().join(f)).ok() == std::fs::read(b.dir.path().join(f)).ok());
        pass &= same;
        details.push(format!("{mode:?}: {} files identical: {same}", files.len()));
    }
    Verdict::new(pass, details.join("; "))
}

fn main() -> ExitCode {
    let noiseless = run(Mode::Noiseless, SEED);
    let noisy = run(Mode::Noisy, SEED);
    let leader = run(Mode::LeaderOnly, SEED);
    let extra: Vec<Run> = [3, 11].into_iter().map(|s| run(Mode::Noiseless, s)).collect();

    let converged: Vec<&Run> = [&noiseless, &noisy, &leader]
        .into_iter()
        .chain(extra.iter())
        .filter(|r| r.report.status.outcome == Outcome::Converged)
        .collect();
    let sync_runs: Vec<&Run> = std::iter::once(&noiseless).chain(extra.iter()).collect();

    let verdicts = [
        criterion_1(),
        criterion_2(),
        criterion_3(&[&noiseless, &leader]),
        criterion_4(),
        criterion_5(&noisy),
        criterion_6(&noisy),
        criterion_7(&leader),
        criterion_8(&sync_runs),
        criterion_9(&converged),
        criterion_10(),
    ];
    let mut failed = 0;
    for (i, v) in verdicts.iter().enumerate() {
        println!("criterion {}: {} {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
