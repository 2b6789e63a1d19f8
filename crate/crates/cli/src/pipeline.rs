//! collect → synthesize → certify → simulate, then write every artifact.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ddc_core::linalg;
use ddc_core::netgraph::{
    build_graph, followers_connected, has_leader_spanning_tree, row_stochastic_dff, weighted_graph_matrix,
    GraphOptions, NetworkGraph, WeightedGraphMatrix,
};
use ddc_core::plant::{check_rank, collect_data, write_matrix_csv, write_record_csv, DataRecord, NoisePolicy};
use ddc_core::sim::{
    certify_network, is_schur, modal_matrix, run_leader_protocol, run_noiseless_protocol, run_noisy_protocol, write_trace_csv, Trace,
};
use ddc_core::synth::{
    are_residual, best_center, consensus_region, enclosing_circle, gain_consensus_matrix,
    informative_gain, leader_gain, leader_protocol_gains, sample_consistent_system, spectrum_gains, synthesize_agent,
    verify_region, RegionKind,
};
use ddc_core::CoreError;
use log::{info, warn};
use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Mode, Resolved};
use crate::error::CliError;
use crate::plot::emit_plot_data;
use crate::report::*;
use crate::{EXIT_INFEASIBLE, EXIT_OK, EXIT_TOLERANCE};

pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";

/// Resolves `cfg`, runs the selected pipeline and writes all artifacts under
/// the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    run_resolved(&cfg.resolve()?)
}

enum Plan {
    Noiseless { gains: Vec<DMatrix<f64>>, o_gain: DMatrix<f64> },
    Noisy { gains: Vec<DMatrix<f64>>, alpha: f64 },
    Leader { gains: Vec<DMatrix<f64>>, couplings: Vec<f64> },
}

struct Design {
    plan: Plan,
    gain: DMatrix<f64>,
    scale: f64,
    eigenvalues: Vec<Complex<f64>>,
    /// Mode-specific conditions beyond the modal Schur checks.
    side_conditions: bool,
}

struct Manifest {
    root: PathBuf,
    files: Vec<String>,
}

impl Manifest {
    fn add(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        for p in paths {
            let rel = p.strip_prefix(&self.root).unwrap_or(&p);
            self.files.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
}

fn graph_options(mode: Mode) -> GraphOptions {
    GraphOptions { require_leader_root: true, undirected_followers: mode != Mode::LeaderOnly }
}

fn closed_loop_norm(r: &Resolved, k: &DMatrix<f64>) -> f64 {
    (&r.plant.a + &r.plant.b * k).norm()
}

/// Input matrix recovered from clean data by least squares on `[U₋; X₋]`.
fn identified_b(rec: &DataRecord) -> DMatrix<f64> {
    let ba = &rec.x_plus * linalg::pinv(&rec.stacked());
    ba.columns(0, rec.p()).into_owned()
}

fn input_is_invertible(b: &DMatrix<f64>) -> bool {
    if !b.is_square() {
        return false;
    }
    let sv = b.singular_values();
    sv.min() > 1e-9 * sv.max()
}

pub fn run_resolved(r: &Resolved) -> Result<ExperimentReport, CliError> {
    let start = Instant::now();
    let mut timings = Timings::default();

    let graph = build_graph(&r.adjacency, graph_options(r.mode)).map_err(|e| CliError::Config(format!("graph: {e}")))?;
    if !has_leader_spanning_tree(&graph) {
        return Err(CliError::Config("graph: leader does not reach every follower".into()));
    }
    let connected = followers_connected(&graph);
    if !connected {
        warn!("follower subgraph is not connected; gain synchronization may stall");
    }
    let wgm = weighted_graph_matrix(&graph)?;
    let n_followers = graph.followers();

    std::fs::create_dir_all(&r.output)?;
    let mut manifest = Manifest { root: r.output.clone(), files: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);

    let t0 = Instant::now();
    let nodes: Vec<usize> = match r.mode {
        Mode::Noiseless => (1..=n_followers).collect(),
        Mode::Noisy => (0..=n_followers).collect(),
        Mode::LeaderOnly => vec![0],
    };
    let noise = match &r.bound {
        Some(bound) => NoisePolicy::BoundedGaussian { bound: bound.clone(), std_dev: r.noise_std },
        None => NoisePolicy::Zero,
    };
    let recs = nodes
        .iter()
        .map(|_| collect_data(&r.plant, r.data_horizon, &r.input, &noise, None, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let spread = r.initial_spread;
    let x0s: Vec<DVector<f64>> =
        (0..=n_followers).map(|_| DVector::from_fn(r.plant.n(), |_, _| rng.random_range(-spread..=spread))).collect();
    let data_dir = r.output.join("data");
    std::fs::create_dir_all(&data_dir)?;
    for (node, rec) in nodes.iter().zip(&recs) {
        manifest.add(write_record_csv(rec, &data_dir, &format!("node{node}"))?);
    }
    timings.collect = t0.elapsed().as_secs_f64();

    let mut report = ExperimentReport {
        mode: r.mode,
        seed: r.seed,
        data_horizon: r.data_horizon,
        status: Status { outcome: Outcome::Infeasible, exit_code: EXIT_INFEASIBLE, message: String::new() },
        graph: GraphReport {
            followers: n_followers,
            followers_connected: connected,
            l_bar_eigenvalues: complex_pairs(&wgm.eigenvalues),
            max_deviation_from_one: wgm.max_deviation_from_one(),
        },
        agents: nodes.iter().zip(&recs).map(|(node, rec)| AgentReport::new(*node, check_rank(rec))).collect(),
        noiseless: None,
        noisy: None,
        leader: None,
        certification: None,
        simulation: None,
        manifest: Vec::new(),
    };

    let t0 = Instant::now();
    let design = match r.mode {
        Mode::Noiseless => design_noiseless(r, &graph, &wgm, &recs, &mut report),
        Mode::Noisy => design_noisy(r, &graph, &recs, &mut report, &mut rng),
        Mode::LeaderOnly => design_leader(r, &wgm, &recs[0], n_followers, &mut report),
    };
    timings.synthesize = t0.elapsed().as_secs_f64();

    let gain_dir = r.output.join("gains");
    std::fs::create_dir_all(&gain_dir)?;
    for a in &report.agents {
        if let Some(k) = &a.k0 {
            let path = gain_dir.join(format!("node{}_k0.csv", a.node));
            let m = DMatrix::from_fn(k.len(), k[0].len(), |i, j| k[i][j]);
            write_matrix_csv(&path, &m)?;
            manifest.add([path]);
        }
    }

    match design {
        Err(msg) => {
            warn!("synthesis failed: {msg}");
            report.status = Status { outcome: Outcome::Infeasible, exit_code: EXIT_INFEASIBLE, message: msg };
        }
        Ok(design) => {
            let t0 = Instant::now();
            let modes: Vec<ModeCheck> = design
                .eigenvalues
                .iter()
                .map(|l| ModeCheck { lambda: [l.re, l.im], schur: is_schur(&modal_matrix(&r.plant, &design.gain, design.scale, *l)) })
                .collect();
            let certified = design.side_conditions && modes.iter().all(|m| m.schur);
            report.certification =
                Some(CertificationReport { certified, scale: design.scale, gain: rows(&design.gain), modes });
            timings.certify = t0.elapsed().as_secs_f64();

            let t0 = Instant::now();
            let trace = simulate(r, &graph, &design.plan, &x0s)?;
            timings.simulate = t0.elapsed().as_secs_f64();
            let settling = trace.settling_step(r.tolerance);
            report.simulation = Some(SimulationReport {
                horizon: r.horizon,
                tolerance: r.tolerance,
                final_error: trace.final_error(),
                settling_step: settling,
                final_gain_disagreement: trace.gain_disagreement.last().copied().unwrap_or(0.0),
                target_gain: rows(&trace.target_gain),
            });
            report.status = match (certified, settling) {
                (false, _) => Status {
                    outcome: Outcome::NotCertified,
                    exit_code: EXIT_INFEASIBLE,
                    message: "closed loop could not be certified Schur".into(),
                },
                (true, Some(k)) => Status {
                    outcome: Outcome::Converged,
                    exit_code: EXIT_OK,
                    message: format!("consensus error below {:e} from step {k}", r.tolerance),
                },
                (true, None) => Status {
                    outcome: Outcome::ToleranceUnmet,
                    exit_code: EXIT_TOLERANCE,
                    message: format!("final consensus error {:e} not below {:e}", trace.final_error(), r.tolerance),
                },
            };

            let t0 = Instant::now();
            let trace_dir = r.output.join("trace");
            std::fs::create_dir_all(&trace_dir)?;
            manifest.add(write_trace_csv(&trace, &trace_dir)?);
            manifest.add(emit_plot_data(&trace, &r.output.join("plot"))?);
            timings.write = t0.elapsed().as_secs_f64();
        }
    }
    info!("{:?}: {}", report.status.outcome, report.status.message);

    manifest.add([r.output.join(REPORT_FILE), r.output.join(TIMINGS_FILE)]);
    report.manifest = manifest.files;
    write_json(&r.output.join(REPORT_FILE), &report)?;
    timings.total = start.elapsed().as_secs_f64();
    write_json(&r.output.join(TIMINGS_FILE), &timings)?;
    Ok(report)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn simulate(r: &Resolved, graph: &NetworkGraph, plan: &Plan, x0s: &[DVector<f64>]) -> Result<Trace, CoreError> {
    match plan {
        Plan::Noiseless { gains, o_gain } => run_noiseless_protocol(&r.plant, graph, gains, o_gain, x0s, r.horizon),
        Plan::Noisy { gains, alpha } => run_noisy_protocol(&r.plant, graph, gains, *alpha, x0s, r.horizon),
        Plan::Leader { gains, couplings } => run_leader_protocol(&r.plant, graph, gains, couplings, x0s, r.horizon),
    }
}

fn first_failure<T>(report: &ExperimentReport, results: &[Result<T, CoreError>]) -> Option<String> {
    results.iter().zip(&report.agents).find_map(|(res, a)| res.as_ref().err().map(|e| format!("node {}: {e}", a.node)))
}

fn design_noiseless(
    r: &Resolved,
    graph: &NetworkGraph,
    wgm: &WeightedGraphMatrix,
    recs: &[DataRecord],
    report: &mut ExperimentReport,
) -> Result<Design, String> {
    let results: Vec<_> = recs.par_iter().map(|rec| synthesize_agent(rec, &r.q)).collect();
    for (a, res) in report.agents.iter_mut().zip(&results) {
        match res {
            Ok(s) => {
                a.k0 = Some(rows(&s.k0));
                a.closed_loop_norm = Some(closed_loop_norm(r, &s.k0));
                a.riccati = Some(rows(&s.p_mat));
                a.are_residual = Some(are_residual(&r.plant, &s.p_mat, &r.q));
            }
            Err(e) => a.error = Some(e.to_string()),
        }
    }
    report.noiseless = Some(NoiselessReport { region: None, o_gain: None, mare: None });
    if let Some(msg) = first_failure(report, &results) {
        return Err(msg);
    }
    let agents: Vec<_> = results.into_iter().map(Result::unwrap).collect();

    let invertible = input_is_invertible(&identified_b(&recs[0]));
    let region = consensus_region(&agents, invertible).map_err(|e| format!("consensus region: {e}"))?;
    let verified = verify_region(wgm, &region);
    let section = report.noiseless.as_mut().expect("set above");
    section.region = Some(RegionReport {
        kind: match region.kind {
            RegionKind::InvertibleB => "invertible-b".into(),
            RegionKind::GeneralB => "general-b".into(),
        },
        bound: region.bound,
        coefficients: region.coeffs.map(|c| [c.a, c.b, c.c, c.d]),
        verified,
    });

    let dff = row_stochastic_dff(graph).map_err(|e| format!("gain synchronization: {e}"))?;
    let p = r.plant.p();
    let o_gain = if dff.degenerate {
        DMatrix::zeros(p, p)
    } else {
        let mg = gain_consensus_matrix(&dff, &r.r_tilde, &r.q_tilde, r.delta).map_err(|e| format!("gain synchronization: {e}"))?;
        section.mare = Some(MareReport { mu: dff.mu, delta: mg.delta, iterations: mg.iterations, lambda: rows(&mg.lambda_mat) });
        mg.o_gain
    };
    section.o_gain = Some(rows(&o_gain));

    let gains: Vec<_> = agents.iter().map(|a| a.k0.clone()).collect();
    let mean = gains.iter().fold(DMatrix::zeros(p, r.plant.n()), |acc, k| acc + k) / gains.len() as f64;
    Ok(Design {
        plan: Plan::Noiseless { gains, o_gain },
        gain: mean,
        scale: 1.0,
        eigenvalues: wgm.eigenvalues.clone(),
        side_conditions: verified,
    })
}

fn design_noisy(
    r: &Resolved,
    graph: &NetworkGraph,
    recs: &[DataRecord],
    report: &mut ExperimentReport,
    rng: &mut ChaCha8Rng,
) -> Result<Design, String> {
    let bound = r.bound.as_ref().expect("noisy mode carries a bound");
    let sg = spectrum_gains(&graph.l_ff).map_err(|e| format!("spectrum of L_ff: {e}"))?;
    report.noisy = Some(NoisyReport {
        alpha: sg.alpha,
        nu: sg.nu,
        lambda_min: sg.lambda_min,
        lambda_max: sg.lambda_max,
        robust_samples: r.robust_samples,
        robust_certified: None,
    });
    let results: Vec<_> = recs.par_iter().map(|rec| informative_gain(rec, bound, &sg)).collect();
    for (a, res) in report.agents.iter_mut().zip(&results) {
        match res {
            Ok(s) => {
                a.k0 = Some(rows(&s.k0));
                a.closed_loop_norm = Some(closed_loop_norm(r, &s.k0));
                a.lmi = Some(LmiReport {
                    margin: s.margin,
                    min_eigenvalue: s.lmi_min_eig,
                    eps: s.eps,
                    gamma: s.gamma_scalar,
                    tau: s.tau,
                });
            }
            Err(e) => a.error = Some(e.to_string()),
        }
    }
    if let Some(msg) = first_failure(report, &results) {
        return Err(msg);
    }
    let gains: Vec<_> = results.into_iter().map(|s| s.unwrap().k0).collect();
    let eigenvalues: Vec<Complex<f64>> =
        linalg::symmetrize(&graph.l_ff).symmetric_eigenvalues().iter().map(|l| Complex::new(*l, 0.0)).collect();

    let mut robust = true;
    for _ in 0..r.robust_samples {
        let (a_hat, b_hat) =
            sample_consistent_system(&r.plant, &recs[0], bound, rng).map_err(|e| format!("system set sampling: {e}"))?;
        let member = ddc_core::plant::Plant::new(a_hat, b_hat).map_err(|e| e.to_string())?;
        robust &= certify_network(&member, &eigenvalues, &gains[0], sg.alpha);
    }
    if r.robust_samples > 0 {
        report.noisy.as_mut().expect("set above").robust_certified = Some(robust);
    }
    Ok(Design {
        gain: gains[0].clone(),
        plan: Plan::Noisy { gains, alpha: sg.alpha },
        scale: sg.alpha,
        eigenvalues,
        side_conditions: robust,
    })
}

fn design_leader(
    r: &Resolved,
    wgm: &WeightedGraphMatrix,
    rec: &DataRecord,
    followers: usize,
    report: &mut ExperimentReport,
) -> Result<Design, String> {
    let s = match leader_gain(rec, &r.q) {
        Ok(s) => s,
        Err(e) => {
            report.agents[0].error = Some(e.to_string());
            return Err(format!("node 0: {e}"));
        }
    };
    let a = &mut report.agents[0];
    a.k0 = Some(rows(&s.k0));
    a.closed_loop_norm = Some(closed_loop_norm(r, &s.k0));
    a.riccati = Some(rows(&s.p_mat));
    a.are_residual = Some(are_residual(&r.plant, &s.p_mat, &r.q));

    let finite = |v: f64| v.is_finite().then_some(v);
    match enclosing_circle(&wgm.eigenvalues, s.theta) {
        Ok(c) => {
            report.leader = Some(LeaderReport {
                theta: s.theta,
                h0: Some(c.h0),
                r0: Some(c.r0),
                c0: Some(c.c0),
                ratio: c.ratio,
                limit: finite(c.limit),
                margin: finite(c.margin()),
            });
            let table = leader_protocol_gains(&s.k0, c.c0, followers);
            Ok(Design {
                plan: Plan::Leader { gains: table.gains, couplings: table.couplings },
                gain: s.k0,
                scale: c.c0,
                eigenvalues: wgm.eigenvalues.clone(),
                side_conditions: true,
            })
        }
        Err(e) => {
            let limit = if s.theta > 0.0 { s.theta.powf(-0.5) } else { f64::INFINITY };
            let ratio = match e {
                CoreError::CircleInfeasible { ratio, .. } => ratio,
                _ => best_center(&wgm.eigenvalues).1,
            };
            report.leader = Some(LeaderReport {
                theta: s.theta,
                h0: None,
                r0: None,
                c0: None,
                ratio,
                limit: finite(limit),
                margin: finite(limit - ratio),
            });
            Err(format!("enclosing circle: {e}"))
        }
    }
}
