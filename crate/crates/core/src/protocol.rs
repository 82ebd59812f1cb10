//! Per-node detection-compensation state machine and the round pipeline
//! shared by D-DCC and S-DCC.
//!
//! A round `k -> k+1` executes:
//! 1. every active node computes `x(k+1) = W x(k) + eps(k)`;
//! 2. every node broadcasts its information set for `k+1`;
//! 3. normal nodes run Detection Strategies I and II on delivered sets
//!    (time-k echoes against time-k+1 states);
//! 4. Schemes I/II (and IV in S-DCC) accrue to the ledgers; the decaying
//!    bound is checked; isolation and Scheme III apply;
//! 5. each normal node selects its compensation input for the next round.
//!
//! Link failures only suppress the information-set channel; state values
//! always propagate, so `W` stays fixed except for isolation folding.

use std::collections::BTreeSet;

use crate::graph::{Topology, WeightMatrix};

/// Detected errors smaller than this count as zero.
pub const DETECTION_ZERO_TOL: f64 = 1e-12;

/// Two-hop broadcast payload for one round.
#[derive(Debug, Clone)]
pub struct InformationSet {
    pub sender: usize,
    /// `x_i(k+1)`
    pub state: f64,
    /// Attack detection indicator `pi`.
    pub flag: bool,
    /// Declared input `eps_i(k)`.
    pub declared_input: f64,
    /// Echo of each neighbor's time-k state, indexed by node id;
    /// `None` means the entry was deleted (audited as zero).
    pub echoes: Vec<Option<f64>>,
    /// `|N_i|` at send time (frozen at the honest initialization round).
    pub neighbor_count: usize,
    /// Nodes the sender isolated this round.
    pub isolation_notices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeParams {
    pub alpha: f64,
    pub rho: f64,
    pub delta: f64,
}

impl NodeParams {
    pub fn bound_at(&self, k: u64) -> f64 {
        self.alpha * self.rho.powi(k as i32)
    }
}

/// Per-neighbor detection records kept by a normal node.
#[derive(Debug, Clone)]
pub struct NeighborRecord {
    /// `x_i(0)`, captured in the honest initialization round.
    pub initial_state: f64,
    /// `|N_i|`, likewise frozen.
    pub neighbor_count: usize,
    /// Last delivered zero-error detection round before the first nonzero
    /// one; -1 means the time origin.
    last_zero_round: i64,
    /// Set once the first nonzero detection is seen.
    pub flagged: bool,
    /// Baseline `k^{j0}`; valid once flagged.
    pub k0: i64,
    /// Running sum and count of stored per-neighbor shares (the error set
    /// Omega kept as sufficient statistics for its mean).
    share_sum: f64,
    /// `m_j`: delivered detections stored since flagging.
    pub detections: u64,
    /// Delivered detections with a nonzero share.
    pub nonzero_detections: u64,
    /// Current Scheme-IV value.
    pub eta4: f64,
    /// Last accepted declared input, for the steadiness check.
    last_declared: f64,
    pub first_detection_round: Option<u64>,
}

impl NeighborRecord {
    fn new(initial_state: f64, neighbor_count: usize) -> Self {
        NeighborRecord {
            initial_state,
            neighbor_count,
            last_zero_round: -1,
            flagged: false,
            k0: -1,
            share_sum: 0.0,
            detections: 0,
            nonzero_detections: 0,
            eta4: 0.0,
            last_declared: 0.0,
            first_detection_round: None,
        }
    }

    pub fn mean_share(&self) -> f64 {
        if self.detections == 0 {
            0.0
        } else {
            self.share_sum / self.detections as f64
        }
    }
}

/// Protocol state owned by one normal node.
#[derive(Debug, Clone)]
pub struct NodeRuntime {
    pub id: usize,
    pub params: NodeParams,
    /// Compensator ledger `eta_j`.
    pub ledger: f64,
    /// `eps_j(k)`: the compensation input selected for the upcoming update.
    pub last_input: f64,
    /// Sticky attack detection indicator `pi_j`.
    pub flag: bool,
    pub isolated: BTreeSet<usize>,
    records: Vec<Option<NeighborRecord>>,
}

impl NodeRuntime {
    /// `n` sizes the record table; actual neighbors registered via
    /// [`NodeRuntime::init_neighbor`].
    pub fn new(id: usize, n: usize, params: NodeParams) -> Self {
        NodeRuntime {
            id,
            params,
            ledger: 0.0,
            last_input: 0.0,
            flag: false,
            isolated: BTreeSet::new(),
            records: vec![None; n],
        }
    }

    /// Honest initialization exchange: store `x_i(0)` and `|N_i|`.
    pub fn init_neighbor(&mut self, i: usize, initial_state: f64, neighbor_count: usize) {
        self.records[i] = Some(NeighborRecord::new(initial_state, neighbor_count));
    }

    pub fn record(&self, i: usize) -> Option<&NeighborRecord> {
        self.records[i].as_ref()
    }

    pub fn record_mut(&mut self, i: usize) -> Option<&mut NeighborRecord> {
        self.records[i].as_mut()
    }
}

/// One detection event, as traced and tested.
#[derive(Debug, Clone, Copy)]
pub struct DetectionOutcome {
    pub detector: usize,
    pub target: usize,
    pub eps1: f64,
    pub eps2: f64,
    /// `eps1 + eps2 / |N_i|`, the Scheme-IV share.
    pub share: f64,
    pub bound_at_k: f64,
    pub violates_bound: bool,
}

/// Strategy I: audit the echo of our own state.
/// `eps_i^{j(1)}(k) = w_ij (x_j^{(i)}(k) - x_j(k))`; a deleted echo is
/// audited as zero.
pub fn detect_strategy_1(psi: &InformationSet, detector: usize, own_prev_state: f64, w_ij: f64) -> f64 {
    let echo = psi.echoes[detector].unwrap_or(0.0);
    w_ij * (echo - own_prev_state)
}

/// Strategy II: audit the update rule.
///
/// Recomputes `sum_l w_il x_l^{(i)}(k)` over the full row in index order so
/// the residual of an honest sender cancels to floating-point noise, then
/// nets out an accepted declared compensation.
pub fn detect_strategy_2(
    psi: &InformationSet,
    weights: &WeightMatrix,
    sender_prev_state: f64,
    accepted_declared: f64,
) -> f64 {
    let i = psi.sender;
    let row = weights.row(i);
    let mut expected = 0.0;
    for (l, &w) in row.iter().enumerate() {
        let xl = if l == i {
            sender_prev_state
        } else {
            psi.echoes[l].unwrap_or(0.0)
        };
        expected += w * xl;
    }
    psi.state - expected - accepted_declared
}

/// Declared-compensation acceptance: netted out of the Strategy-II residual
/// iff the flag is set, the input respects the decaying bound at `k`, and it
/// moved by at most `delta` since the last accepted value.
pub fn accept_declared(
    psi: &InformationSet,
    params: &NodeParams,
    last_declared: f64,
    k: u64,
) -> bool {
    psi.flag
        && psi.declared_input.abs() <= params.bound_at(k)
        && (psi.declared_input - last_declared).abs() <= params.delta
}

/// Schemes I and II: full credit for the echo error, an equal split of the
/// update-rule error over the target's neighbor count.
pub fn accrue_compensation_1_2(node: &mut NodeRuntime, outcome: &DetectionOutcome) {
    if outcome.eps1.abs() > DETECTION_ZERO_TOL {
        node.ledger += -outcome.eps1;
    }
    if outcome.eps2.abs() > DETECTION_ZERO_TOL {
        let nc = node.records[outcome.target]
            .as_ref()
            .expect("detection ran for a registered neighbor")
            .neighbor_count as f64;
        node.ledger += -outcome.eps2 / nc;
    }
}

/// Scheme III plus permanent isolation; idempotent per target.
pub fn isolate_and_compensate_3(node: &mut NodeRuntime, target: usize, x_target_now: f64) {
    if node.isolated.contains(&target) {
        return;
    }
    let rec = node.records[target]
        .as_ref()
        .expect("isolation targets a registered neighbor");
    node.ledger += (x_target_now - rec.initial_state) / rec.neighbor_count as f64;
    node.isolated.insert(target);
}

/// Scheme IV: store this round's share, refresh the running mean, and swap
/// the previous Scheme-IV value for the new one in the ledger.
pub fn accrue_compensation_4(node: &mut NodeRuntime, target: usize, share: f64, k: u64) {
    let rec = node.records[target]
        .as_mut()
        .expect("scheme IV targets a registered neighbor");
    rec.share_sum += share;
    rec.detections += 1;
    let mean = rec.share_sum / rec.detections as f64;
    let undetected = k as i64 - rec.k0 - rec.detections as i64;
    let new_eta4 = -(undetected as f64) * mean;
    let delta = new_eta4 - rec.eta4;
    rec.eta4 = new_eta4;
    // Skip exact zeros so an all-delivered S-DCC run stays bit-identical
    // to D-DCC.
    if delta != 0.0 {
        node.ledger += delta;
    }
}

/// `eps_j(k_next) = sign(eta) * min(|eta|, alpha rho^{k_next}, |eps_j(k)| + delta)`;
/// the ledger is decremented by the returned value.
pub fn select_compensation_input(node: &mut NodeRuntime, k_next: u64) -> f64 {
    let bound = node.params.bound_at(k_next);
    let steady = node.last_input.abs() + node.params.delta;
    let mag = node.ledger.abs().min(bound).min(steady);
    let eps = if node.ledger >= 0.0 { mag } else { -mag };
    node.ledger -= eps;
    node.last_input = eps;
    eps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Normal,
    Malicious,
    Faulty,
}

impl Role {
    pub fn is_misbehaving(&self) -> bool {
        !matches!(self, Role::Normal)
    }
}

/// Symmetric per-round delivery mask for the information-set channel.
#[derive(Debug, Clone)]
pub struct LinkMask {
    n: usize,
    delivered: Vec<bool>,
}

impl LinkMask {
    pub fn all_delivered(n: usize) -> Self {
        LinkMask { n, delivered: vec![true; n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut delivered = vec![true; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let d = f(a, b);
                delivered[a * n + b] = d;
                delivered[b * n + a] = d;
            }
        }
        LinkMask { n, delivered }
    }

    pub fn delivered(&self, a: usize, b: usize) -> bool {
        self.delivered[a * self.n + b]
    }
}

/// Everything the engine needs back from one protocol round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    /// States after the update, `x(k+1)`.
    pub states: Vec<f64>,
    /// Input applied to each node this round (error or compensation).
    pub inputs: Vec<f64>,
    /// Ledgers after accrual and isolation, before selection.
    pub ledgers_pre_selection: Vec<f64>,
    /// Ledgers after compensation selection.
    pub ledgers_post_selection: Vec<f64>,
    pub detections: Vec<DetectionOutcome>,
    pub newly_isolated: Vec<usize>,
}

/// Shared network state for a run: effective weights, per-node runtimes,
/// roles, and the frozen initialization data.
#[derive(Debug, Clone)]
pub struct Network {
    pub topology: Topology,
    pub weights: WeightMatrix,
    pub roles: Vec<Role>,
    pub states: Vec<f64>,
    pub initial_states: Vec<f64>,
    pub initial_neighbor_counts: Vec<usize>,
    pub isolated: Vec<bool>,
    pub nodes: Vec<Option<NodeRuntime>>,
}

impl Network {
    pub fn new(
        topology: Topology,
        weights: WeightMatrix,
        roles: Vec<Role>,
        initial_states: Vec<f64>,
        params: NodeParams,
    ) -> Self {
        let n = topology.n();
        assert_eq!(weights.n(), n);
        assert_eq!(roles.len(), n);
        assert_eq!(initial_states.len(), n);
        let counts: Vec<usize> = (0..n).map(|i| topology.degree(i)).collect();
        let mut nodes: Vec<Option<NodeRuntime>> = Vec::with_capacity(n);
        for j in 0..n {
            if roles[j] == Role::Normal {
                let mut rt = NodeRuntime::new(j, n, params);
                // Initialization round: exchange true initial states and
                // neighbor counts (misbehaving nodes honest at k = 0).
                for i in topology.neighbors(j) {
                    rt.init_neighbor(i, initial_states[i], counts[i]);
                }
                nodes.push(Some(rt));
            } else {
                nodes.push(None);
            }
        }
        Network {
            topology,
            weights,
            roles,
            states: initial_states.clone(),
            initial_states,
            initial_neighbor_counts: counts,
            isolated: vec![false; n],
            nodes,
        }
    }

    pub fn n(&self) -> usize {
        self.topology.n()
    }

    /// Residual node set: unisolated nodes.
    pub fn residual_set(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.isolated[i]).collect()
    }

    fn update_state(&self, i: usize, errors: &[f64]) -> (f64, f64) {
        let input = match self.roles[i] {
            Role::Normal => self.nodes[i].as_ref().unwrap().last_input,
            _ => errors[i],
        };
        let row = self.weights.row(i);
        let mut acc = 0.0;
        for (l, &w) in row.iter().enumerate() {
            acc += w * self.states[l];
        }
        (acc + input, input)
    }

    /// Execute one shared D-DCC/S-DCC round. `errors[i]` is the misbehavior
    /// input of node `i` this round (ignored for normal nodes); `scheme4`
    /// enables the mean-based compensation of undetected errors.
    pub fn step(&mut self, errors: &[f64], mask: &LinkMask, k: u64, scheme4: bool) -> RoundOutcome {
        let n = self.n();

        // Phase 1: state update.
        let mut next = self.states.clone();
        let mut inputs = vec![0.0; n];
        for i in 0..n {
            if self.isolated[i] {
                continue; // frozen
            }
            let (x, input) = self.update_state(i, errors);
            next[i] = x;
            inputs[i] = input;
        }

        // Phase 2: broadcast. All configured adversaries misbehave through
        // their state update, so every sender echoes honestly; misbehaving
        // senders declare no input and keep the flag down.
        let psis: Vec<InformationSet> = (0..n)
            .map(|i| {
                let echoes: Vec<Option<f64>> = (0..n)
                    .map(|l| {
                        if self.topology.has_edge(i, l) && !self.isolated[l] {
                            Some(self.states[l])
                        } else {
                            None
                        }
                    })
                    .collect();
                let (flag, declared) = match self.roles[i] {
                    Role::Normal => {
                        let rt = self.nodes[i].as_ref().unwrap();
                        (rt.flag, rt.last_input)
                    }
                    _ => (false, 0.0),
                };
                InformationSet {
                    sender: i,
                    state: next[i],
                    flag,
                    declared_input: declared,
                    echoes,
                    neighbor_count: self.initial_neighbor_counts[i],
                    isolation_notices: Vec::new(),
                }
            })
            .collect();

        // Phases 3-4: detection, Schemes I/II/IV, bound check.
        let mut detections = Vec::new();
        let mut verdicts: BTreeSet<usize> = BTreeSet::new();
        for j in 0..n {
            if self.roles[j] != Role::Normal || self.isolated[j] {
                continue;
            }
            for i in self.topology.neighbors(j) {
                if self.isolated[i] || !mask.delivered(i, j) {
                    continue;
                }
                let psi = &psis[i];
                let node = self.nodes[j].as_mut().unwrap();
                let w_ij = self.weights.get(i, j);
                let eps1 = detect_strategy_1(psi, j, self.states[j], w_ij);
                let last_declared = node.records[i].as_ref().unwrap().last_declared;
                let accepted = if accept_declared(psi, &node.params, last_declared, k) {
                    psi.declared_input
                } else {
                    0.0
                };
                let eps2 = detect_strategy_2(psi, &self.weights, self.states[i], accepted);
                if accepted != 0.0 || psi.flag {
                    node.records[i].as_mut().unwrap().last_declared = psi.declared_input;
                }

                let nc = psi.neighbor_count as f64;
                let share = eps1 + eps2 / nc;
                let bound = node.params.bound_at(k);
                let combined = eps1 + eps2;
                let nonzero = combined.abs() > DETECTION_ZERO_TOL;
                let outcome = DetectionOutcome {
                    detector: j,
                    target: i,
                    eps1,
                    eps2,
                    share,
                    bound_at_k: bound,
                    violates_bound: combined.abs() > bound,
                };
                accrue_compensation_1_2(node, &outcome);

                // Scheme-IV bookkeeping (baseline and flagging tracked in
                // both modes; the ledger swap only in S-DCC).
                let rec = node.records[i].as_mut().unwrap();
                if !rec.flagged {
                    if nonzero {
                        rec.flagged = true;
                        rec.k0 = rec.last_zero_round;
                        rec.first_detection_round = Some(k);
                    } else {
                        rec.last_zero_round = k as i64;
                    }
                }
                if rec.flagged {
                    if nonzero {
                        rec.nonzero_detections += 1;
                    }
                    if scheme4 {
                        accrue_compensation_4(node, i, share, k);
                    }
                }
                if nonzero {
                    node.flag = true;
                }
                if outcome.violates_bound {
                    verdicts.insert(i);
                }
                detections.push(outcome);
            }
        }

        // Phase 4b: isolation. Notices make every neighbor isolate the
        // target in the same round, so each accrues its 1/|N_i| share of
        // Scheme III and the folded matrix stays doubly stochastic.
        let mut newly_isolated = Vec::new();
        for &i in &verdicts {
            if self.isolated[i] {
                continue;
            }
            for j in self.topology.neighbors(i) {
                if self.roles[j] == Role::Normal && !self.isolated[j] {
                    isolate_and_compensate_3(self.nodes[j].as_mut().unwrap(), i, next[i]);
                }
            }
            self.isolated[i] = true;
            self.weights.fold_out(i);
            newly_isolated.push(i);
        }

        let ledgers_pre: Vec<f64> = (0..n)
            .map(|j| self.nodes[j].as_ref().map_or(0.0, |rt| rt.ledger))
            .collect();

        // Phase 5: compensation selection for the next round.
        for j in 0..n {
            if self.roles[j] != Role::Normal || self.isolated[j] {
                continue;
            }
            select_compensation_input(self.nodes[j].as_mut().unwrap(), k + 1);
        }
        let ledgers_post: Vec<f64> = (0..n)
            .map(|j| self.nodes[j].as_ref().map_or(0.0, |rt| rt.ledger))
            .collect();

        self.states = next.clone();
        RoundOutcome {
            states: next,
            inputs,
            ledgers_pre_selection: ledgers_pre,
            ledgers_post_selection: ledgers_post,
            detections,
            newly_isolated,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_erdos_renyi, is_connected, perron_weights, Topology};

    fn params() -> NodeParams {
        NodeParams { alpha: 5.0, rho: 0.9, delta: 10.0 }
    }

    fn psi_with_echoes(sender: usize, n: usize, state: f64, echoes: &[(usize, f64)]) -> InformationSet {
        let mut e = vec![None; n];
        for &(l, v) in echoes {
            e[l] = Some(v);
        }
        InformationSet {
            sender,
            state,
            flag: false,
            declared_input: 0.0,
            echoes: e,
            neighbor_count: echoes.len(),
            isolation_notices: Vec::new(),
        }
    }

    #[test]
    fn strategy_1_cases() {
        let psi = psi_with_echoes(1, 3, 0.0, &[(0, 1.0)]);
        assert_eq!(detect_strategy_1(&psi, 0, 1.0, 0.25), 0.0);

        let psi = psi_with_echoes(1, 3, 0.0, &[(0, 1.2)]);
        assert!((detect_strategy_1(&psi, 0, 1.0, 0.25) - 0.05).abs() < 1e-15);

        // deleted echo audited as zero
        let psi = psi_with_echoes(1, 3, 0.0, &[]);
        assert!((detect_strategy_1(&psi, 0, 1.0, 0.25) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn strategy_2_cases() {
        // path 0-1-2, gamma = 0.4: w_11 = 0.2, w_10 = w_12 = 0.4
        let t = Topology::new(3, [(0, 1), (1, 2)]).unwrap();
        let w = perron_weights(&t, 0.4).unwrap();

        // honest: x_1(k+1) = 0.4*1.0 + 0.2*0.5 + 0.4*2.0
        let honest = 0.4 * 1.0 + 0.2 * 0.5 + 0.4 * 2.0;
        let psi = psi_with_echoes(1, 3, honest, &[(0, 1.0), (2, 2.0)]);
        assert!(detect_strategy_2(&psi, &w, 0.5, 0.0).abs() < 1e-15);

        // residual appears in full
        let psi = psi_with_echoes(1, 3, honest + 0.1, &[(0, 1.0), (2, 2.0)]);
        assert!((detect_strategy_2(&psi, &w, 0.5, 0.0) - 0.1).abs() < 1e-12);

        // accepted declared compensation netted out
        let psi = psi_with_echoes(1, 3, honest + 0.1, &[(0, 1.0), (2, 2.0)]);
        assert!(detect_strategy_2(&psi, &w, 0.5, 0.1).abs() < 1e-12);
    }

    #[test]
    fn accrual_1_2_cases() {
        let t = Topology::new(3, [(0, 1), (1, 2)]).unwrap();
        let mut node = NodeRuntime::new(0, 3, params());
        node.init_neighbor(1, 0.0, 4);
        let mk = |eps1: f64, eps2: f64| DetectionOutcome {
            detector: 0,
            target: 1,
            eps1,
            eps2,
            share: 0.0,
            bound_at_k: 5.0,
            violates_bound: false,
        };
        accrue_compensation_1_2(&mut node, &mk(0.05, 0.0));
        assert!((node.ledger + 0.05).abs() < 1e-15);
        node.ledger = 0.0;
        accrue_compensation_1_2(&mut node, &mk(0.0, 0.1));
        assert!((node.ledger + 0.025).abs() < 1e-15);
        node.ledger = 0.0;
        accrue_compensation_1_2(&mut node, &mk(0.0, 0.0));
        assert_eq!(node.ledger, 0.0);
        let _ = t;
    }

    #[test]
    fn scheme_3_isolation_idempotent() {
        let mut node = NodeRuntime::new(0, 3, params());
        node.init_neighbor(1, 1.0, 2);
        isolate_and_compensate_3(&mut node, 1, 1.4);
        assert!((node.ledger - 0.2).abs() < 1e-15);
        isolate_and_compensate_3(&mut node, 1, 99.0);
        assert!((node.ledger - 0.2).abs() < 1e-15);

        let mut other = NodeRuntime::new(0, 3, params());
        other.init_neighbor(1, 1.0, 2);
        isolate_and_compensate_3(&mut other, 1, 1.0);
        assert_eq!(other.ledger, 0.0);
        assert!(other.isolated.contains(&1));
    }

    #[test]
    fn scheme_4_arithmetic() {
        let mut node = NodeRuntime::new(0, 3, params());
        node.init_neighbor(1, 0.0, 2);
        {
            let rec = node.record_mut(1).unwrap();
            rec.flagged = true;
            rec.k0 = 0;
            // five shares of 0.02 already stored
            rec.share_sum = 0.1;
            rec.detections = 5;
        }
        // sixth detection at k = 10: m = 6, mean = 0.02,
        // eta4 = -(10 - 0 - 6) * 0.02 = -0.08
        accrue_compensation_4(&mut node, 1, 0.02, 10);
        assert!((node.record(1).unwrap().eta4 + 0.08).abs() < 1e-15);
        assert!((node.ledger + 0.08).abs() < 1e-15);

        // replacement rule: the recomputed value swaps in and the ledger
        // moves by the difference. m = 7, mean = 0.02,
        // eta4 = -(12 - 0 - 7) * 0.02 = -0.10, ledger += -0.02.
        let before = node.ledger;
        accrue_compensation_4(&mut node, 1, 0.02, 12);
        assert!((node.record(1).unwrap().eta4 + 0.10).abs() < 1e-12);
        assert!((node.ledger - (before - 0.02)).abs() < 1e-12);
    }

    #[test]
    fn scheme_4_all_detected_is_zero() {
        // With every round delivered from the origin (k0 = -1),
        // detections = k + 1 and the undetected term vanishes.
        let mut node = NodeRuntime::new(0, 3, params());
        node.init_neighbor(1, 0.0, 2);
        {
            let rec = node.record_mut(1).unwrap();
            rec.flagged = true;
            rec.k0 = -1;
        }
        for k in 0..5u64 {
            accrue_compensation_4(&mut node, 1, 0.02, k);
            assert_eq!(node.record(1).unwrap().eta4, 0.0);
        }
        assert_eq!(node.ledger, 0.0);
    }

    #[test]
    fn selection_cases() {
        let mut node = NodeRuntime::new(0, 1, params());
        assert_eq!(select_compensation_input(&mut node, 1), 0.0);

        let mut node = NodeRuntime::new(0, 1, NodeParams { alpha: 0.5, rho: 1.0 - 1e-16, delta: 0.4 });
        node.ledger = 0.3;
        let eps = select_compensation_input(&mut node, 1);
        assert!((eps - 0.3).abs() < 1e-15);
        assert!(node.ledger.abs() < 1e-15);

        // cap 5 * 0.9^10 binds
        let mut node = NodeRuntime::new(0, 1, NodeParams { alpha: 5.0, rho: 0.9, delta: 0.1 });
        node.ledger = 2.0;
        node.last_input = 1.7;
        let cap = 5.0 * 0.9f64.powi(10);
        let eps = select_compensation_input(&mut node, 10);
        assert!((eps - cap).abs() < 1e-12);
        assert!((node.ledger - (2.0 - cap)).abs() < 1e-12);
    }

    #[test]
    fn selection_never_grows_ledger() {
        let mut node = NodeRuntime::new(0, 1, params());
        node.ledger = -3.7;
        for k in 0..200 {
            let before = node.ledger.abs();
            select_compensation_input(&mut node, k);
            assert!(node.ledger.abs() <= before + 1e-15);
        }
    }

    #[test]
    fn step_without_adversaries_is_plain_consensus() {
        let t = generate_erdos_renyi(6, 0.7, 3);
        assert!(is_connected(&t));
        let w = perron_weights(&t, 0.9 / t.max_degree() as f64).unwrap();
        let init: Vec<f64> = (0..6).map(|i| i as f64 * 0.3).collect();
        let mut net = Network::new(t.clone(), w.clone(), vec![Role::Normal; 6], init.clone(), params());
        let mask = LinkMask::all_delivered(6);
        let mut reference = init.clone();
        for k in 0..50 {
            let out = net.step(&vec![0.0; 6], &mask, k, false);
            let next: Vec<f64> = (0..6)
                .map(|i| w.row(i).iter().zip(&reference).map(|(a, b)| a * b).sum())
                .collect();
            reference = next;
            assert_eq!(out.states, reference);
            for l in out.ledgers_post_selection {
                assert_eq!(l, 0.0);
            }
        }
    }
}
