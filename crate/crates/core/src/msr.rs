//! W-MSR baseline: trim the extreme neighbor states, average the rest.

use crate::graph::Topology;
use crate::protocol::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MsrParams {
    /// Trim count per side.
    pub f: usize,
}

impl Default for MsrParams {
    fn default() -> Self {
        // one malicious neighbor per node maximum under the sparse
        // adversary assumption
        MsrParams { f: 1 }
    }
}

/// One synchronous W-MSR round. Normal nodes drop up to `F` neighbor values
/// strictly above their own (largest first) and up to `F` strictly below
/// (smallest first), then average themselves with the survivors using equal
/// weights. Misbehaving nodes average all neighbors and add their error.
pub fn step_wmsr(
    states: &[f64],
    topology: &Topology,
    params: MsrParams,
    roles: &[Role],
    errors: &[f64],
) -> Vec<f64> {
    let n = topology.n();
    let mut next = vec![0.0; n];
    for j in 0..n {
        let neighbors = topology.neighbors(j);
        if roles[j].is_misbehaving() {
            let sum: f64 = neighbors.iter().map(|&l| states[l]).sum::<f64>() + states[j];
            next[j] = sum / (neighbors.len() + 1) as f64 + errors[j];
            continue;
        }
        let own = states[j];
        let mut vals: Vec<f64> = neighbors.iter().map(|&l| states[l]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // drop up to F strictly larger, largest first
        let mut hi = vals.len();
        let mut dropped = 0;
        while dropped < params.f && hi > 0 && vals[hi - 1] > own {
            hi -= 1;
            dropped += 1;
        }
        // drop up to F strictly smaller, smallest first
        let mut lo = 0;
        dropped = 0;
        while dropped < params.f && lo < hi && vals[lo] < own {
            lo += 1;
            dropped += 1;
        }
        let survivors = &vals[lo..hi];
        let sum: f64 = survivors.iter().sum::<f64>() + own;
        next[j] = sum / (survivors.len() + 1) as f64;
    }
    next
}
