//! Visit bookkeeping, the Node Count policy and the coverage cost term.
//!
//! Visits are counted per node and lifted to edges through the destination:
//! the count of edge `(n, n')` is the count of `n'`. That makes the coverage
//! cost directed even though the topology is symmetric.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{Digraph, NavGraph, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("node {0} has no neighbors")]
    Isolated(NodeId),
    #[error("{0} -> {1} is not an edge")]
    NotAnEdge(NodeId, NodeId),
}

/// Per-node visit tallies.
///
/// With `window == 0` counts are cumulative. With `window == W > 0`,
/// [`count`](Self::count) only reflects the last `W` closed rounds plus the
/// round in progress, while [`cumulative`](Self::cumulative) keeps the
/// full history.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitCounts {
    counts: Vec<u64>,
    cumulative: Vec<u64>,
    window: usize,
    history: VecDeque<Vec<(NodeId, u64)>>,
    pending: Vec<(NodeId, u64)>,
}

impl VisitCounts {
    pub fn new(node_count: usize) -> Self {
        Self::windowed(node_count, 0)
    }

    pub fn windowed(node_count: usize, window: usize) -> Self {
        Self {
            counts: vec![0; node_count],
            cumulative: vec![0; node_count],
            window,
            history: VecDeque::new(),
            pending: Vec::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn node_count(&self) -> usize {
        self.counts.len()
    }

    /// Count used for planning (windowed when a window is set).
    pub fn count(&self, n: NodeId) -> u64 {
        self.counts[n.index()]
    }

    pub fn cumulative(&self, n: NodeId) -> u64 {
        self.cumulative[n.index()]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn cumulative_counts(&self) -> &[u64] {
        &self.cumulative
    }

    /// Count of edge `(_, to)`, which is the count of its destination.
    pub fn edge_count(&self, _from: NodeId, to: NodeId) -> u64 {
        self.count(to)
    }

    pub fn total_visits(&self) -> u64 {
        self.cumulative.iter().sum()
    }

    pub fn record_visit(&mut self, n: NodeId) {
        self.add(n, 1);
    }

    fn add(&mut self, n: NodeId, amount: u64) {
        if amount == 0 {
            return;
        }
        self.counts[n.index()] += amount;
        self.cumulative[n.index()] += amount;
        if self.window > 0 {
            self.pending.push((n, amount));
        }
    }

    /// Closes the current round, expiring increments older than the window.
    pub fn end_round(&mut self) {
        if self.window == 0 {
            return;
        }
        self.history.push_back(std::mem::take(&mut self.pending));
        while self.history.len() > self.window {
            for (n, amount) in self.history.pop_front().expect("non-empty") {
                self.counts[n.index()] -= amount;
            }
        }
    }

    /// Element-wise max merge of another party's knowledge into this one.
    /// Whatever this side lacks is booked as a fresh increment, so it ages
    /// out of the window like any other visit.
    pub fn merge_max(&mut self, other: &VisitCounts) {
        assert_eq!(
            self.node_count(),
            other.node_count(),
            "count tables differ in size"
        );
        for i in 0..self.counts.len() {
            let missing = other.counts[i].saturating_sub(self.counts[i]);
            if missing > 0 {
                self.counts[i] += missing;
                if self.window > 0 {
                    self.pending.push((NodeId::from(i), missing));
                }
            }
            self.cumulative[i] = self.cumulative[i].max(other.cumulative[i]);
        }
    }
}

/// Neighbors of `current` ordered by ascending cumulative count. Equal
/// counts are ordered by a seeded shuffle, so the first entry is the Node
/// Count move. The sliding window only shapes the coverage cost.
pub fn node_count_candidates<G: Digraph + ?Sized>(
    g: &G,
    current: NodeId,
    counts: &VisitCounts,
    rng_seed: u64,
) -> Result<Vec<NodeId>, CoverageError> {
    let mut candidates = g.successors(current).to_vec();
    if candidates.is_empty() {
        return Err(CoverageError::Isolated(current));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    candidates.shuffle(&mut rng);
    candidates.sort_by_key(|&n| counts.cumulative(n));
    Ok(candidates)
}

/// Least-visited neighbor of `current`, ties broken at random. Does not
/// record the visit.
pub fn node_count_step<G: Digraph + ?Sized>(
    g: &G,
    current: NodeId,
    counts: &VisitCounts,
    rng_seed: u64,
) -> Result<NodeId, CoverageError> {
    node_count_candidates(g, current, counts, rng_seed).map(|c| c[0])
}

/// `beta * count(n, n')`.
pub fn coverage_cost(counts: &VisitCounts, from: NodeId, to: NodeId, beta: f64) -> f64 {
    beta * counts.edge_count(from, to) as f64
}

/// Communication plus coverage cost of an edge of `g`.
pub fn total_cost(
    g: &NavGraph,
    counts: &VisitCounts,
    from: NodeId,
    to: NodeId,
    beta: f64,
) -> Result<f64, CoverageError> {
    let comm = g
        .edge_comm_cost(from, to)
        .ok_or(CoverageError::NotAnEdge(from, to))?;
    Ok(comm + coverage_cost(counts, from, to, beta))
}

/// Edge cost function handed to the relay solver for hybrid chains.
#[derive(Debug, Clone, Copy)]
pub struct HybridCost<'a> {
    pub graph: &'a NavGraph,
    pub counts: &'a VisitCounts,
    pub beta: f64,
}

impl HybridCost<'_> {
    /// Cost of a graph edge. Non-edges cost infinity.
    pub fn cost(&self, from: NodeId, to: NodeId) -> f64 {
        total_cost(self.graph, self.counts, from, to, self.beta).unwrap_or(f64::INFINITY)
    }

    pub fn comm(&self, from: NodeId, to: NodeId) -> f64 {
        self.graph.edge_comm_cost(from, to).unwrap_or(f64::INFINITY)
    }
}
