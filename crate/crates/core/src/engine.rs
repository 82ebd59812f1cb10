//! Seeded synchronous-round simulation driver: single runs, link-failure
//! sampling, trace recording, convergence detection, and Monte-Carlo
//! batches.

use rand::Rng;
use thiserror::Error;

use crate::adversary::ErrorModel;
use crate::graph::{
    self, generate_erdos_renyi, is_connected, metropolis_weights, perron_weights, Topology,
    WeightMatrix,
};
use crate::msr::{step_wmsr, MsrParams};
use crate::protocol::{LinkMask, Network, NodeParams, Role};
use crate::rng;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("graph is disconnected")]
    Disconnected,
    #[error("misbehaving nodes {0} and {1} are adjacent (sparse-adversary assumption)")]
    AdjacentMisbehaving(usize, usize),
    #[error("node id {0} out of range for n = {1}")]
    NodeOutOfRange(usize, usize),
    #[error("duplicate adversary entry for node {0}")]
    DuplicateAdversary(usize),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Plain,
    Ddcc,
    Sdcc,
    Wmsr,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Plain => "plain",
            Algorithm::Ddcc => "ddcc",
            Algorithm::Sdcc => "sdcc",
            Algorithm::Wmsr => "wmsr",
        }
    }
}

#[derive(Debug, Clone)]
pub enum TopologySource {
    /// Erdos-Renyi sample; resampled with an incremented seed until
    /// connected, the final seed is recorded in the resolution.
    Generate { n: usize, p_edge: f64, seed: u64 },
    Explicit(Topology),
}

#[derive(Debug, Clone)]
pub enum WeightSchemeCfg {
    /// `gamma = None` uses the default 0.9 / d_max.
    Perron { gamma: Option<f64> },
    Metropolis,
}

#[derive(Debug, Clone)]
pub enum InitStates {
    Uniform { low: f64, high: f64 },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct AdversarySpec {
    pub id: usize,
    pub role: Role,
    pub model: ErrorModel,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub topology: TopologySource,
    pub weights: WeightSchemeCfg,
    pub init: InitStates,
    pub adversaries: Vec<AdversarySpec>,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub rho: f64,
    /// Steadiness limit; defaults to 2 * alpha (effectively non-binding).
    pub delta: Option<f64>,
    /// Information-set delivery probability (S-DCC only).
    pub p_link: f64,
    pub horizon: u64,
    pub master_seed: u64,
    /// Monte-Carlo run count.
    pub runs: u32,
    pub msr_f: usize,
}

/// Validated, fully materialized inputs for a run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub topology: Topology,
    pub weights: WeightMatrix,
    pub initial_states: Vec<f64>,
    pub roles: Vec<Role>,
    pub models: Vec<Option<ErrorModel>>,
    pub params: NodeParams,
    /// Seed that produced the connected sample, when generated.
    pub topology_seed_used: Option<u64>,
}

pub fn resolve(cfg: &RunConfig) -> Result<Resolved, EngineError> {
    let (topology, seed_used) = match &cfg.topology {
        TopologySource::Generate { n, p_edge, seed } => {
            if *n < 2 {
                return Err(EngineError::Invalid("need at least two nodes".into()));
            }
            if !(0.0..=1.0).contains(p_edge) {
                return Err(EngineError::Invalid("p_edge must be in [0, 1]".into()));
            }
            let mut s = *seed;
            loop {
                let t = generate_erdos_renyi(*n, *p_edge, s);
                if is_connected(&t) {
                    break (t, Some(s));
                }
                s = s.wrapping_add(1);
            }
        }
        TopologySource::Explicit(t) => {
            if !is_connected(t) {
                return Err(EngineError::Disconnected);
            }
            (t.clone(), None)
        }
    };
    let n = topology.n();

    let mut roles = vec![Role::Normal; n];
    let mut models: Vec<Option<ErrorModel>> = vec![None; n];
    for adv in &cfg.adversaries {
        if adv.id >= n {
            return Err(EngineError::NodeOutOfRange(adv.id, n));
        }
        if roles[adv.id] != Role::Normal {
            return Err(EngineError::DuplicateAdversary(adv.id));
        }
        if !adv.role.is_misbehaving() {
            return Err(EngineError::Invalid(format!(
                "adversary entry for node {} must be malicious or faulty",
                adv.id
            )));
        }
        roles[adv.id] = adv.role;
        models[adv.id] = Some(adv.model.clone());
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if roles[a].is_misbehaving() && roles[b].is_misbehaving() && topology.has_edge(a, b) {
                return Err(EngineError::AdjacentMisbehaving(a, b));
            }
        }
    }

    let weights = match &cfg.weights {
        WeightSchemeCfg::Perron { gamma } => {
            let g = gamma.unwrap_or(0.9 / topology.max_degree() as f64);
            perron_weights(&topology, g)?
        }
        WeightSchemeCfg::Metropolis => metropolis_weights(&topology),
    };

    let initial_states = match &cfg.init {
        InitStates::Uniform { low, high } => {
            if high <= low {
                return Err(EngineError::Invalid("empty initial-state interval".into()));
            }
            let mut r = rng::stream(cfg.master_seed, "init", 0, 0);
            (0..n).map(|_| r.gen_range(*low..*high)).collect()
        }
        InitStates::Explicit(v) => {
            if v.len() != n {
                return Err(EngineError::Invalid(format!(
                    "{} initial states for {} nodes",
                    v.len(),
                    n
                )));
            }
            v.clone()
        }
    };

    if !(0.0..=1.0).contains(&cfg.p_link) {
        return Err(EngineError::Invalid("p_link must be in [0, 1]".into()));
    }
    if cfg.alpha <= 0.0 || !(0.0..1.0).contains(&cfg.rho) {
        return Err(EngineError::Invalid("need alpha > 0 and rho in [0, 1)".into()));
    }

    let params = NodeParams {
        alpha: cfg.alpha,
        rho: cfg.rho,
        delta: cfg.delta.unwrap_or(2.0 * cfg.alpha),
    };
    Ok(Resolved {
        topology,
        weights,
        initial_states,
        roles,
        models,
        params,
        topology_seed_used: seed_used,
    })
}

/// Per-round observable record.
#[derive(Debug, Clone)]
pub struct RoundSnapshot {
    pub k: u64,
    pub states: Vec<f64>,
    /// Input applied in the update that produced these states.
    pub inputs: Vec<f64>,
    /// Ledgers after accrual and isolation, before compensation selection.
    pub ledgers: Vec<f64>,
    pub flags: Vec<bool>,
    pub isolated: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
pub struct DetectionEvent {
    pub k: u64,
    pub detector: usize,
    pub target: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub bound: f64,
    pub violated: bool,
}

/// End-of-run statistics for one misbehaving node.
#[derive(Debug, Clone)]
pub struct MisbehaviorStats {
    pub node: usize,
    pub role: Role,
    pub isolation_round: Option<u64>,
    /// min over neighbors of the stored-detection count at isolation.
    pub m_min_at_isolation: Option<u64>,
    /// min over neighbors of the stored-detection count at the horizon.
    pub m_min_final: u64,
    /// min over neighbors of the nonzero-detection count at the horizon.
    pub m_min_nonzero: u64,
    pub first_detection_round: Option<u64>,
    /// First nonzero-detection round as seen by each normal neighbor,
    /// one entry per detecting link.
    pub per_link_first_detection: Vec<Option<u64>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub algorithm: Algorithm,
    /// Mean over the evaluation set at the horizon.
    pub final_value: f64,
    /// Mean of the evaluation set's recorded initial states.
    pub target: f64,
    pub abs_error: f64,
    /// Nodes the final value and target are computed over.
    pub eval_set: Vec<usize>,
    pub initial_states: Vec<f64>,
    pub isolation_rounds: Vec<(usize, u64)>,
    pub misbehavior_stats: Vec<MisbehaviorStats>,
    /// Whether the residual subgraph stayed connected.
    pub residual_connected: bool,
    pub topology_seed_used: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<RoundSnapshot>,
    pub detections: Vec<DetectionEvent>,
    pub summary: ExperimentSummary,
}

/// One symmetric Bernoulli(p) draw per unordered edge.
pub fn sample_link_mask<R: Rng>(topology: &Topology, p: f64, rng: &mut R) -> LinkMask {
    LinkMask::from_fn(topology.n(), |a, b| {
        if topology.has_edge(a, b) {
            rng.gen::<f64>() < p
        } else {
            true
        }
    })
}

/// First round where the max-min spread over the evaluation set stays below
/// `tol` for `window` consecutive recorded rounds.
pub fn detect_convergence(
    trace: &[RoundSnapshot],
    eval_set: &[usize],
    tol: f64,
    window: u64,
) -> Option<u64> {
    assert!(tol > 0.0);
    let mut streak = 0u64;
    let mut start = None;
    for snap in trace {
        let active: Vec<f64> = eval_set
            .iter()
            .filter(|&&i| !snap.isolated[i])
            .map(|&i| snap.states[i])
            .collect();
        let lo = active.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = active.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < tol {
            if streak == 0 {
                start = Some(snap.k);
            }
            streak += 1;
            if streak >= window {
                return start;
            }
        } else {
            streak = 0;
            start = None;
        }
    }
    None
}

fn eval_set_for(algorithm: Algorithm, roles: &[Role], isolated: &[bool]) -> Vec<usize> {
    (0..roles.len())
        .filter(|&i| match algorithm {
            Algorithm::Ddcc | Algorithm::Sdcc => !isolated[i],
            // no isolation mechanism: report over the normal set
            Algorithm::Wmsr | Algorithm::Plain => !roles[i].is_misbehaving(),
        })
        .collect()
}

fn subgraph_connected(t: &Topology, keep: &[usize]) -> bool {
    if keep.is_empty() {
        return true;
    }
    let mut seen = vec![false; t.n()];
    let mut in_set = vec![false; t.n()];
    for &i in keep {
        in_set[i] = true;
    }
    let mut stack = vec![keep[0]];
    seen[keep[0]] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for j in t.neighbors(i) {
            if in_set[j] && !seen[j] {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == keep.len()
}

/// Execute one run. `run_idx` selects the RNG streams so Monte-Carlo runs
/// are independent; the initial states come from `resolved` and are shared
/// across a batch.
pub fn run_resolved(
    cfg: &RunConfig,
    resolved: &Resolved,
    run_idx: u64,
    record_trace: bool,
) -> RunResult {
    let n = resolved.topology.n();
    let mut adv_streams: Vec<Option<rand_chacha::ChaCha12Rng>> = (0..n)
        .map(|i| {
            resolved.models[i]
                .as_ref()
                .map(|_| rng::stream(cfg.master_seed, "adv", i as u64, run_idx))
        })
        .collect();
    let mut link_stream = rng::stream(cfg.master_seed, "link", 0, run_idx);

    let mut trace = Vec::new();
    let mut detections = Vec::new();
    let mut isolation_rounds: Vec<(usize, u64)> = Vec::new();
    let mut m_at_isolation: Vec<Option<u64>> = vec![None; n];

    let push_initial = |trace: &mut Vec<RoundSnapshot>| {
        trace.push(RoundSnapshot {
            k: 0,
            states: resolved.initial_states.clone(),
            inputs: vec![0.0; n],
            ledgers: vec![0.0; n],
            flags: vec![false; n],
            isolated: vec![false; n],
        });
    };

    let sample_errors = |k: u64,
                         isolated: &[bool],
                         streams: &mut Vec<Option<rand_chacha::ChaCha12Rng>>|
     -> Vec<f64> {
        (0..n)
            .map(|i| match (&resolved.models[i], isolated[i]) {
                (Some(model), false) => model.sample(k, streams[i].as_mut().unwrap()),
                _ => 0.0,
            })
            .collect()
    };

    match cfg.algorithm {
        Algorithm::Ddcc | Algorithm::Sdcc => {
            let scheme4 = cfg.algorithm == Algorithm::Sdcc;
            let mut net = Network::new(
                resolved.topology.clone(),
                resolved.weights.clone(),
                resolved.roles.clone(),
                resolved.initial_states.clone(),
                resolved.params,
            );
            if record_trace {
                push_initial(&mut trace);
            }
            for k in 0..cfg.horizon {
                let errors = sample_errors(k, &net.isolated, &mut adv_streams);
                let mask = if scheme4 {
                    sample_link_mask(&resolved.topology, cfg.p_link, &mut link_stream)
                } else {
                    LinkMask::all_delivered(n)
                };
                let out = net.step(&errors, &mask, k, scheme4);
                for &i in &out.newly_isolated {
                    isolation_rounds.push((i, k));
                    let m = resolved
                        .topology
                        .neighbors(i)
                        .into_iter()
                        .filter_map(|j| {
                            net.nodes[j].as_ref().and_then(|rt| rt.record(i)).map(|r| r.detections)
                        })
                        .min()
                        .unwrap_or(0);
                    m_at_isolation[i] = Some(m);
                }
                if record_trace {
                    trace.push(RoundSnapshot {
                        k: k + 1,
                        states: out.states.clone(),
                        inputs: out.inputs.clone(),
                        ledgers: out.ledgers_pre_selection.clone(),
                        flags: (0..n)
                            .map(|j| net.nodes[j].as_ref().map_or(false, |rt| rt.flag))
                            .collect(),
                        isolated: net.isolated.clone(),
                    });
                    detections.extend(out.detections.iter().map(|d| DetectionEvent {
                        k,
                        detector: d.detector,
                        target: d.target,
                        eps1: d.eps1,
                        eps2: d.eps2,
                        bound: d.bound_at_k,
                        violated: d.violates_bound,
                    }));
                }
            }

            let eval = eval_set_for(cfg.algorithm, &resolved.roles, &net.isolated);
            let stats = collect_stats(&resolved, &net, &isolation_rounds, &m_at_isolation);
            let summary = summarize(cfg, resolved, &net.states, eval, isolation_rounds, stats);
            RunResult { trace, detections, summary }
        }
        Algorithm::Wmsr | Algorithm::Plain => {
            let isolated = vec![false; n];
            let mut states = resolved.initial_states.clone();
            if record_trace {
                push_initial(&mut trace);
            }
            for k in 0..cfg.horizon {
                let errors = sample_errors(k, &isolated, &mut adv_streams);
                states = match cfg.algorithm {
                    Algorithm::Wmsr => step_wmsr(
                        &states,
                        &resolved.topology,
                        MsrParams { f: cfg.msr_f },
                        &resolved.roles,
                        &errors,
                    ),
                    _ => (0..n)
                        .map(|i| {
                            let row = resolved.weights.row(i);
                            let dot: f64 = row.iter().zip(&states).map(|(a, b)| a * b).sum();
                            dot + errors[i]
                        })
                        .collect(),
                };
                if record_trace {
                    trace.push(RoundSnapshot {
                        k: k + 1,
                        states: states.clone(),
                        inputs: errors,
                        ledgers: vec![0.0; n],
                        flags: vec![false; n],
                        isolated: isolated.clone(),
                    });
                }
            }
            let eval = eval_set_for(cfg.algorithm, &resolved.roles, &isolated);
            let summary = summarize(cfg, resolved, &states, eval, Vec::new(), Vec::new());
            RunResult { trace, detections, summary }
        }
    }
}

fn collect_stats(
    resolved: &Resolved,
    net: &Network,
    isolation_rounds: &[(usize, u64)],
    m_at_isolation: &[Option<u64>],
) -> Vec<MisbehaviorStats> {
    let mut out = Vec::new();
    for i in 0..resolved.topology.n() {
        if !resolved.roles[i].is_misbehaving() {
            continue;
        }
        let neighbor_records: Vec<_> = resolved
            .topology
            .neighbors(i)
            .into_iter()
            .filter_map(|j| net.nodes[j].as_ref().and_then(|rt| rt.record(i)))
            .map(|r| (r.detections, r.nonzero_detections, r.first_detection_round))
            .collect();
        let m_min_final = neighbor_records.iter().map(|r| r.0).min().unwrap_or(0);
        let m_min_nonzero = neighbor_records.iter().map(|r| r.1).min().unwrap_or(0);
        let first_detection_round = neighbor_records.iter().filter_map(|r| r.2).min();
        let per_link_first_detection = neighbor_records.iter().map(|r| r.2).collect();
        out.push(MisbehaviorStats {
            node: i,
            role: resolved.roles[i],
            isolation_round: isolation_rounds.iter().find(|(j, _)| *j == i).map(|(_, k)| *k),
            m_min_at_isolation: m_at_isolation[i],
            m_min_final,
            m_min_nonzero,
            first_detection_round,
            per_link_first_detection,
        });
    }
    out
}

fn summarize(
    cfg: &RunConfig,
    resolved: &Resolved,
    states: &[f64],
    eval_set: Vec<usize>,
    isolation_rounds: Vec<(usize, u64)>,
    misbehavior_stats: Vec<MisbehaviorStats>,
) -> ExperimentSummary {
    // target recomputed from the recorded initials, never cached
    let target = eval_set.iter().map(|&i| resolved.initial_states[i]).sum::<f64>()
        / eval_set.len() as f64;
    let final_value = eval_set.iter().map(|&i| states[i]).sum::<f64>() / eval_set.len() as f64;
    ExperimentSummary {
        algorithm: cfg.algorithm,
        final_value,
        target,
        abs_error: (final_value - target).abs(),
        residual_connected: subgraph_connected(&resolved.topology, &eval_set),
        eval_set,
        initial_states: resolved.initial_states.clone(),
        isolation_rounds,
        misbehavior_stats,
        topology_seed_used: resolved.topology_seed_used,
    }
}

pub fn run_single(cfg: &RunConfig) -> Result<RunResult, EngineError> {
    let resolved = resolve(cfg)?;
    Ok(run_resolved(cfg, &resolved, 0, true))
}

#[derive(Debug, Clone)]
pub struct BatchSummary {
    pub runs: u32,
    pub mean_final_value: f64,
    /// Unbiased sample variance of the final values.
    pub variance: f64,
    pub target: f64,
    pub per_run: Vec<ExperimentSummary>,
}

fn aggregate(per_run: Vec<ExperimentSummary>) -> BatchSummary {
    let r = per_run.len();
    let mean = per_run.iter().map(|s| s.final_value).sum::<f64>() / r as f64;
    let variance = if r > 1 {
        per_run.iter().map(|s| (s.final_value - mean).powi(2)).sum::<f64>() / (r - 1) as f64
    } else {
        0.0
    };
    BatchSummary {
        runs: r as u32,
        mean_final_value: mean,
        variance,
        target: per_run[0].target,
        per_run,
    }
}

/// Sequential Monte-Carlo batch; initial states are drawn once and shared.
pub fn run_monte_carlo_seq(cfg: &RunConfig) -> Result<BatchSummary, EngineError> {
    if cfg.runs == 0 {
        return Err(EngineError::Invalid("runs must be >= 1".into()));
    }
    let resolved = resolve(cfg)?;
    let per_run: Vec<ExperimentSummary> = (0..cfg.runs as u64)
        .map(|r| run_resolved(cfg, &resolved, r, false).summary)
        .collect();
    Ok(aggregate(per_run))
}

/// Monte-Carlo batch; runs execute in parallel when the `parallel` feature
/// is enabled. Aggregation is a pure reduce, so the result is identical to
/// the sequential path.
pub fn run_monte_carlo(cfg: &RunConfig) -> Result<BatchSummary, EngineError> {
    if cfg.runs == 0 {
        return Err(EngineError::Invalid("runs must be >= 1".into()));
    }
    let resolved = resolve(cfg)?;
    #[cfg(feature = "parallel")]
    let per_run: Vec<ExperimentSummary> = {
        use rayon::prelude::*;
        (0..cfg.runs as u64)
            .into_par_iter()
            .map(|r| run_resolved(cfg, &resolved, r, false).summary)
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_run: Vec<ExperimentSummary> = (0..cfg.runs as u64)
        .map(|r| run_resolved(cfg, &resolved, r, false).summary)
        .collect();
    Ok(aggregate(per_run))
}
