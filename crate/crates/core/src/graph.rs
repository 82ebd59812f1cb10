//! Undirected topologies and doubly stochastic weight matrices.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("gamma {gamma} outside the open interval (0, {limit}) = (0, 1/d_max)")]
    InvalidGamma { gamma: f64, limit: f64 },
    #[error("node index {0} out of range for n = {1}")]
    NodeOutOfRange(usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("malformed edge list: {0}")]
    ParseError(String),
}

/// Undirected graph on nodes `0..n` with no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Topology {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            if a >= n {
                return Err(GraphError::NodeOutOfRange(a, n));
            }
            if b >= n {
                return Err(GraphError::NodeOutOfRange(b, n));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Topology { n, edges: set })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_edge(i, j)).count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Edge-list text format: first line `n`, then one `i j` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.n);
        for (a, b) in &self.edges {
            let _ = writeln!(s, "{a} {b}");
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| GraphError::ParseError("empty input".into()))?
            .trim()
            .parse()
            .map_err(|e| GraphError::ParseError(format!("bad node count: {e}")))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let a: usize = it
                .next()
                .ok_or_else(|| GraphError::ParseError(format!("bad edge line: {line}")))?
                .parse()
                .map_err(|e| GraphError::ParseError(format!("bad index: {e}")))?;
            let b: usize = it
                .next()
                .ok_or_else(|| GraphError::ParseError(format!("bad edge line: {line}")))?
                .parse()
                .map_err(|e| GraphError::ParseError(format!("bad index: {e}")))?;
            edges.push((a, b));
        }
        Topology::new(n, edges)
    }
}

/// Each unordered pair is included independently with probability `p_edge`.
/// Pure function of `(n, p_edge, seed)`.
pub fn generate_erdos_renyi(n: usize, p_edge: f64, seed: u64) -> Topology {
    assert!(n >= 2, "need at least two nodes");
    assert!((0.0..=1.0).contains(&p_edge), "p_edge must be a probability");
    let mut rng = rng::stream(seed, "er-graph", 0, 0);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.gen::<f64>() < p_edge {
                edges.push((a, b));
            }
        }
    }
    Topology::new(n, edges).expect("generated edges are valid by construction")
}

pub fn is_connected(t: &Topology) -> bool {
    if t.n == 0 {
        return true;
    }
    let mut seen = vec![false; t.n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for j in t.neighbors(i) {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == t.n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    Perron,
    Metropolis,
}

/// Doubly stochastic update matrix; `w_ij != 0` for `i != j` only on edges.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    w: Vec<f64>, // row-major
    scheme: WeightScheme,
}

impl WeightMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.w[i * self.n + j] = v;
    }

    /// Fold the weight mass of an isolated node back onto the diagonals of
    /// its neighbors and zero its row and column. The reduced matrix stays
    /// doubly stochastic on the remaining nodes.
    pub fn fold_out(&mut self, i: usize) {
        for j in 0..self.n {
            if j == i {
                continue;
            }
            let wji = self.get(j, i);
            if wji != 0.0 {
                let d = self.get(j, j) + wji;
                self.set(j, j, d);
                self.set(j, i, 0.0);
            }
            self.set(i, j, 0.0);
        }
        self.set(i, i, 0.0);
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }
}

/// `W = I - gamma * L`; requires `0 < gamma < 1/d_max` (strict).
pub fn perron_weights(t: &Topology, gamma: f64) -> Result<WeightMatrix, GraphError> {
    let dm = t.max_degree() as f64;
    let limit = if dm > 0.0 { 1.0 / dm } else { f64::INFINITY };
    if !(gamma > 0.0 && gamma < limit) {
        return Err(GraphError::InvalidGamma { gamma, limit });
    }
    let n = t.n();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        w[i * n + i] = 1.0 - gamma * t.degree(i) as f64;
        for j in t.neighbors(i) {
            w[i * n + j] = gamma;
        }
    }
    Ok(WeightMatrix { n, w, scheme: WeightScheme::Perron })
}

/// Metropolis rule: `w_ij = 1/(1 + max(d_i, d_j))` on edges, residual on
/// the diagonal. Neighbors can recompute these from degree counts alone.
pub fn metropolis_weights(t: &Topology) -> WeightMatrix {
    let n = t.n();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        let mut diag = 1.0;
        for j in t.neighbors(i) {
            let wij = 1.0 / (1.0 + t.degree(i).max(t.degree(j)) as f64);
            w[i * n + j] = wij;
            diag -= wij;
        }
        w[i * n + i] = diag;
    }
    WeightMatrix { n, w, scheme: WeightScheme::Metropolis }
}
