//! Experiment front door: subcommand parsing, dispatch, and artifact
//! writing. Outputs are deterministic byte-for-byte for a given recipe.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::adversary::ErrorModel;
use crate::analysis;
use crate::config::{ConfigError, ExperimentConfig};
use crate::engine::{
    self, Algorithm, BatchSummary, EngineError, ExperimentSummary, RunConfig, RunResult,
};
use crate::protocol::Role;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "dcc",
    about = "Resilient average consensus simulator: detection-compensation protocols, \
             a trimmed-mean baseline, and post-hoc bound analysis."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute one run and write trace.csv, detections.csv, summary.txt,
    /// analysis.txt.
    Run(CommonArgs),
    /// Execute a Monte-Carlo batch and write summary.txt, analysis.txt.
    MonteCarlo(CommonArgs),
    /// Run several algorithms on identical inputs and write comparison.csv.
    Compare(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment recipe (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the recipe's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Engine(_) => EXIT_VALIDATION,
        }
    }
}

/// Dispatch a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::MonteCarlo(args) => cmd_monte_carlo(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(args: &CommonArgs) -> Result<(ExperimentConfig, RunConfig), CliError> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let run_cfg = cfg.to_run_config(base, args.seed)?;
    Ok((cfg, run_cfg))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: dir.join(name), source };
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join(name), contents).map_err(io)
}

fn cmd_run(args: &CommonArgs) -> Result<(), CliError> {
    let (_, run_cfg) = load(args)?;
    let result = engine::run_single(&run_cfg)?;

    write_file(&args.out, "trace.csv", &render_trace(&run_cfg, &result))?;
    write_file(&args.out, "detections.csv", &render_detections(&result))?;
    write_file(&args.out, "summary.txt", &render_summary(&result.summary))?;
    write_file(
        &args.out,
        "analysis.txt",
        &render_analysis(&run_cfg, std::slice::from_ref(&result.summary), None),
    )?;

    if !args.quiet {
        println!(
            "{}: final {:.6}, target {:.6}, |error| {:.3e}",
            run_cfg.algorithm.name(),
            result.summary.final_value,
            result.summary.target,
            result.summary.abs_error
        );
    }
    Ok(())
}

fn cmd_monte_carlo(args: &CommonArgs) -> Result<(), CliError> {
    let (_, run_cfg) = load(args)?;
    let batch = engine::run_monte_carlo(&run_cfg)?;

    write_file(&args.out, "summary.txt", &render_batch_summary(&batch))?;
    write_file(
        &args.out,
        "analysis.txt",
        &render_analysis(&run_cfg, &batch.per_run, Some(&batch)),
    )?;

    if !args.quiet {
        println!(
            "{}: {} runs, mean {:.6}, variance {:.6e}, target {:.6}",
            run_cfg.algorithm.name(),
            batch.runs,
            batch.mean_final_value,
            batch.variance,
            batch.target
        );
    }
    Ok(())
}

fn cmd_compare(args: &CommonArgs) -> Result<(), CliError> {
    let (cfg, base_cfg) = load(args)?;
    let algorithms = cfg.comparison_list()?;

    let mut rows = String::from("algorithm,final_value,target,abs_error,isolation_rounds\n");
    let mut stdout_lines = Vec::new();
    // ddcc's residual target anchors the error column when available
    let mut results: Vec<(Algorithm, RunResult)> = Vec::new();
    for algo in algorithms {
        let mut c = base_cfg.clone();
        c.algorithm = algo;
        results.push((algo, engine::run_single(&c)?));
    }
    let common_target = results
        .iter()
        .find(|(a, _)| *a == Algorithm::Ddcc)
        .map(|(_, r)| r.summary.target);
    for (algo, result) in &results {
        let s = &result.summary;
        let target = common_target.unwrap_or(s.target);
        let err = (s.final_value - target).abs();
        let iso = s
            .isolation_rounds
            .iter()
            .map(|(i, k)| format!("{i}@{k}"))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(rows, "{},{},{},{},{}", algo.name(), s.final_value, target, err, iso);
        stdout_lines.push(format!("{}: final {:.6}, |error| {:.3e}", algo.name(), s.final_value, err));
    }

    write_file(&args.out, "comparison.csv", &rows)?;
    if !args.quiet {
        for line in stdout_lines {
            println!("{line}");
        }
    }
    Ok(())
}

fn render_trace(cfg: &RunConfig, result: &RunResult) -> String {
    let resolved = engine::resolve(cfg).expect("config was already validated");
    let mut s = String::from("k,node,state,eps,eta,pi,isolated\n");
    for snap in &result.trace {
        for node in 0..snap.states.len() {
            let misbehaving = resolved.roles[node].is_misbehaving();
            let (eps, eta) = if misbehaving {
                (snap.inputs[node], 0.0)
            } else {
                (0.0, snap.inputs[node])
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                snap.k,
                node,
                snap.states[node],
                eps,
                eta,
                snap.flags[node] as u8,
                snap.isolated[node] as u8
            );
        }
    }
    s
}

fn render_detections(result: &RunResult) -> String {
    let mut s = String::from("k,detector,target,eps1,eps2,bound,violated\n");
    for d in &result.detections {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            d.k, d.detector, d.target, d.eps1, d.eps2, d.bound, d.violated as u8
        );
    }
    s
}

fn render_summary(s: &ExperimentSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "algorithm: {}", s.algorithm.name());
    let _ = writeln!(out, "final_value: {}", s.final_value);
    let _ = writeln!(out, "target: {}", s.target);
    let _ = writeln!(out, "abs_error: {}", s.abs_error);
    let _ = writeln!(
        out,
        "eval_set: {}",
        s.eval_set.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
    );
    let _ = writeln!(out, "residual_connected: {}", s.residual_connected);
    if let Some(seed) = s.topology_seed_used {
        let _ = writeln!(out, "topology_seed_used: {seed}");
    }
    let _ = writeln!(
        out,
        "initial_states: {}",
        s.initial_states.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
    );
    for (i, k) in &s.isolation_rounds {
        let _ = writeln!(out, "isolated: node {i} at round {k}");
    }
    for st in &s.misbehavior_stats {
        let _ = writeln!(
            out,
            "node {} ({:?}): isolation {:?}, detections_at_isolation {:?}, \
             detections_final {}, nonzero_detections {}, first_detection {:?}",
            st.node,
            st.role,
            st.isolation_round,
            st.m_min_at_isolation,
            st.m_min_final,
            st.m_min_nonzero,
            st.first_detection_round
        );
    }
    out
}

fn render_batch_summary(b: &BatchSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "runs: {}", b.runs);
    let _ = writeln!(out, "mean_final_value: {}", b.mean_final_value);
    let _ = writeln!(out, "variance: {}", b.variance);
    let _ = writeln!(out, "target: {}", b.target);
    let _ = writeln!(out, "abs_error_of_mean: {}", (b.mean_final_value - b.target).abs());
    let _ = writeln!(out, "run,final_value,abs_error,isolation_rounds");
    for (r, s) in b.per_run.iter().enumerate() {
        let iso = s
            .isolation_rounds
            .iter()
            .map(|(i, k)| format!("{i}@{k}"))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(out, "{},{},{},{}", r, s.final_value, s.abs_error, iso);
    }
    out
}

/// Worst-case variance bound for one run from its recorded isolation rounds
/// and detection counts; `None` when no misbehaving node has a stochastic
/// model (the bound only speaks about stochastic errors).
pub fn run_variance_bound(cfg: &RunConfig, s: &ExperimentSummary) -> Option<f64> {
    let mut total = 0.0;
    let mut any = false;
    for st in &s.misbehavior_stats {
        let model = cfg.adversaries.iter().find(|a| a.id == st.node)?;
        let stoch = match &model.model {
            ErrorModel::Stochastic(m) => m,
            ErrorModel::Deterministic(_) => continue,
        };
        any = true;
        let sig2 = stoch.error_variance();
        match (st.role, st.isolation_round) {
            (Role::Malicious, Some(k_iso)) => {
                total += analysis::variance_bound_malicious(
                    k_iso,
                    st.m_min_at_isolation.unwrap_or(0),
                    sig2,
                );
            }
            (Role::Faulty, None) => {
                let (k0, k1) = stoch
                    .window
                    .map(|w| (w.start, w.end.min(cfg.horizon)))
                    .unwrap_or((0, cfg.horizon));
                let (mu, _) = stoch.attack_moments();
                total += analysis::variance_bound_faulty(
                    cfg.p_link,
                    k0,
                    k1,
                    st.m_min_nonzero,
                    sig2,
                    stoch.theta,
                    mu,
                );
            }
            // isolated faulty node: treat like the malicious case
            (_, Some(k_iso)) => {
                total += analysis::variance_bound_malicious(
                    k_iso,
                    st.m_min_at_isolation.unwrap_or(0),
                    sig2,
                );
            }
            // unisolated malicious node: no bound applies yet
            (_, None) => return None,
        }
    }
    any.then_some(total)
}

fn render_analysis(
    cfg: &RunConfig,
    per_run: &[ExperimentSummary],
    batch: Option<&BatchSummary>,
) -> String {
    let first = &per_run[0];
    let n = first.initial_states.len();
    let v_r = first.eval_set.len();
    let v_m = cfg.adversaries.len();
    let mut out = String::new();

    let dev_bound = analysis::deviation_bound(cfg.alpha, cfg.rho, n, v_m, v_r);
    let _ = writeln!(out, "deviation_bound: {dev_bound}");
    let worst_dev = per_run.iter().map(|s| s.abs_error).fold(0.0, f64::max);
    let _ = writeln!(out, "max_abs_deviation: {worst_dev}");
    let _ = writeln!(out, "deviation_within_bound: {}", worst_dev <= dev_bound);

    if let Some(b) = batch {
        let bound = per_run
            .iter()
            .filter_map(|s| run_variance_bound(cfg, s))
            .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v))));
        if let Some(bound) = bound {
            let _ = writeln!(out, "variance_bound_worst_case: {bound}");
            let _ = writeln!(out, "empirical_variance: {}", b.variance);
            let _ = writeln!(out, "variance_within_bound: {}", b.variance <= bound);
        }
    }

    for adv in &cfg.adversaries {
        let stoch = match &adv.model {
            ErrorModel::Stochastic(m) => m,
            ErrorModel::Deterministic(_) => continue,
        };
        let _ = writeln!(
            out,
            "node {} detection law: P(detect by k) = 1-(1-p*theta)^k, mean rounds {}",
            adv.id,
            analysis::mean_rounds_to_detection(cfg.p_link, stoch.theta)
        );
        // Wasserstein comparison against the normal approximation supported
        // by the recorded detection count (min over runs with detections).
        let m = per_run
            .iter()
            .flat_map(|s| s.misbehavior_stats.iter())
            .filter(|st| st.node == adv.id)
            .map(|st| st.m_min_at_isolation.unwrap_or(st.m_min_final))
            .filter(|&m| m > 0)
            .min();
        if let Some(m) = m {
            let bound = analysis::wasserstein_bound(stoch, m);
            match analysis::wasserstein_error_vs_normal(stoch, m) {
                Ok(d) => {
                    let _ = writeln!(out, "node {} wasserstein (M={m}): {d}", adv.id);
                    let _ = writeln!(out, "node {} wasserstein_bound: {bound}", adv.id);
                    let _ = writeln!(out, "node {} wasserstein_within_bound: {}", adv.id, d <= bound);
                }
                Err(e) => {
                    let _ = writeln!(out, "node {} wasserstein: failed ({e})", adv.id);
                }
            }
        }
    }
    out
}
