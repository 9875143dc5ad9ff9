//! Relay chains of limited length and minimal cost.
//!
//! [`mlmc_tree`] grows a shortest-path tree over compound `(cost, length)`
//! labels where cost dominates and hop count breaks ties. [`DualAscent`]
//! wraps it: while the chain to the target needs more relays than are
//! available, every edge cost is raised by a uniform penalty `alpha`, just
//! enough for at least one node to switch to a shorter chain, and the tree is
//! rebuilt.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::graph::{Digraph, NavGraph, NodeId};

/// Absolute tolerance for comparing costs.
pub const COST_TOLERANCE: f64 = 1e-9;

/// Ordered list of nodes from the base (first) to the target (last).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chain(Vec<NodeId>);

impl Chain {
    pub fn new(nodes: Vec<NodeId>) -> Self {
        assert!(!nodes.is_empty(), "a chain holds at least the base node");
        Self(nodes)
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    /// Number of links, i.e. node count minus one.
    pub fn length(&self) -> usize {
        self.0.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.0.len()
    }

    pub fn base(&self) -> NodeId {
        self.0[0]
    }

    pub fn target(&self) -> NodeId {
        *self.0.last().expect("non-empty")
    }

    /// Relay positions strictly between base and target.
    pub fn interior(&self) -> &[NodeId] {
        if self.0.len() <= 2 {
            &[]
        } else {
            &self.0[1..self.0.len() - 1]
        }
    }

    pub fn links(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }

    /// Checks that consecutive nodes are linked and no node repeats.
    pub fn validate<G: Digraph + ?Sized>(&self, g: &G) -> Result<(), RelayError> {
        let n = g.node_count();
        if let Some(&bad) = self.0.iter().find(|v| v.index() >= n) {
            return Err(RelayError::NodeOutOfRange(bad));
        }
        if let Some((a, b)) = self.links().find(|&(a, b)| !g.has_edge(a, b)) {
            return Err(RelayError::InvalidChain(format!(
                "{a} -> {b} is not an edge"
            )));
        }
        let mut seen = vec![false; n];
        for v in &self.0 {
            if std::mem::replace(&mut seen[v.index()], true) {
                return Err(RelayError::InvalidChain(format!("{v} appears twice")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelayError {
    #[error("node {0} is not in the graph")]
    NodeOutOfRange(NodeId),
    #[error("relay budget must be at least one UAV")]
    InvalidBudget,
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("target {target} is unreachable from the base")]
    Unreachable { target: NodeId },
    #[error("no chain to {target} fits the budget (no improving edge left, alpha = {alpha})")]
    NoImprovingEdges {
        target: NodeId,
        alpha: f64,
        iterations: usize,
    },
    #[error("dual ascent hit its iteration cap ({iterations}) for {target}")]
    IterationCap {
        target: NodeId,
        alpha: f64,
        iterations: usize,
    },
}

impl RelayError {
    /// Short machine-readable reason code.
    pub fn reason_code(&self) -> &'static str {
        match self {
            RelayError::NodeOutOfRange(_) => "node-out-of-range",
            RelayError::InvalidBudget => "invalid-budget",
            RelayError::InvalidChain(_) => "invalid-chain",
            RelayError::Unreachable { .. } => "unreachable",
            RelayError::NoImprovingEdges { .. } => "no-improving-edges",
            RelayError::IterationCap { .. } => "iteration-cap",
        }
    }
}

/// Compound chain label. Cost has priority; length breaks ties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Label {
    pub cost: f64,
    pub length: u32,
}

impl Label {
    /// Compares with cost priority, treating costs within
    /// [`COST_TOLERANCE`] as equal.
    pub fn compare(&self, other: &Label) -> Ordering {
        if self.cost < other.cost - COST_TOLERANCE {
            Ordering::Less
        } else if self.cost > other.cost + COST_TOLERANCE {
            Ordering::Greater
        } else {
            self.length.cmp(&other.length)
        }
    }
}

/// Tree of minimum-length minimum-cost chains from a root.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmcTree {
    root: NodeId,
    parent: Vec<Option<NodeId>>,
    depth: Vec<u32>,
    modified_cost: Vec<f64>,
}

impl MlmcTree {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        self.parent[n.index()]
    }

    pub fn is_reachable(&self, n: NodeId) -> bool {
        self.modified_cost[n.index()].is_finite()
    }

    /// Hop count from the root, `None` when unreachable.
    pub fn depth(&self, n: NodeId) -> Option<u32> {
        self.is_reachable(n).then(|| self.depth[n.index()])
    }

    /// Penalized chain cost from the root; infinite when unreachable.
    pub fn modified_cost(&self, n: NodeId) -> f64 {
        self.modified_cost[n.index()]
    }

    pub fn label(&self, n: NodeId) -> Option<Label> {
        self.is_reachable(n).then(|| Label {
            cost: self.modified_cost[n.index()],
            length: self.depth[n.index()],
        })
    }

    /// Tree chain from the root to `n`.
    pub fn chain_to(&self, n: NodeId) -> Option<Chain> {
        if !self.is_reachable(n) {
            return None;
        }
        let mut nodes = vec![n];
        let mut cur = n;
        while let Some(p) = self.parent[cur.index()] {
            nodes.push(p);
            cur = p;
        }
        nodes.reverse();
        Some(Chain(nodes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QueueEntry {
    cost: f64,
    length: u32,
    node: NodeId,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.length.cmp(&other.length))
            .then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over compound labels with per-edge cost `edge_cost(n, n') + alpha`.
///
/// Equal labels settle in node-id order, and a node reached by two equal
/// labels keeps the lower parent id.
pub fn mlmc_tree<G, F>(g: &G, root: NodeId, edge_cost: F, alpha: f64) -> MlmcTree
where
    G: Digraph + ?Sized,
    F: Fn(NodeId, NodeId) -> f64,
{
    let n = g.node_count();
    assert!(root.index() < n, "root {root} not in graph");
    let mut parent = vec![None; n];
    let mut depth = vec![u32::MAX; n];
    let mut cost = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    cost[root.index()] = 0.0;
    depth[root.index()] = 0;

    let mut heap = BinaryHeap::new();
    heap.push(Reverse(QueueEntry {
        cost: 0.0,
        length: 0,
        node: root,
    }));
    while let Some(Reverse(e)) = heap.pop() {
        let u = e.node.index();
        if settled[u] || e.cost.to_bits() != cost[u].to_bits() || e.length != depth[u] {
            continue;
        }
        settled[u] = true;
        let here = Label {
            cost: cost[u],
            length: depth[u],
        };
        for &v in g.successors(e.node) {
            let vi = v.index();
            if settled[vi] {
                continue;
            }
            let cand = Label {
                cost: here.cost + edge_cost(e.node, v) + alpha,
                length: here.length + 1,
            };
            let current = Label {
                cost: cost[vi],
                length: depth[vi],
            };
            match cand.compare(&current) {
                Ordering::Less => {
                    cost[vi] = cand.cost;
                    depth[vi] = cand.length;
                    parent[vi] = Some(e.node);
                    heap.push(Reverse(QueueEntry {
                        cost: cand.cost,
                        length: cand.length,
                        node: v,
                    }));
                }
                Ordering::Equal if parent[vi].is_none_or(|p| e.node < p) => {
                    parent[vi] = Some(e.node);
                }
                _ => {}
            }
        }
    }

    MlmcTree {
        root,
        parent,
        depth,
        modified_cost: cost,
    }
}

/// One refinement step of the dual ascent loop.
#[derive(Debug, Clone, PartialEq)]
pub struct DualAscentState {
    /// Penalty used to build the tree that proved infeasible.
    pub alpha: f64,
    /// Target depth in that tree.
    pub target_depth: u32,
    /// Edges `(n, n')` with `q(n') > q(n) + 1`, paired with their epsilon.
    pub improving_edges: Vec<((NodeId, NodeId), f64)>,
    /// Smallest per-edge epsilon, added to `alpha`.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSolution {
    pub chain: Chain,
    /// Penalty of the tree the chain was taken from.
    pub alpha: f64,
    /// Refinement steps taken before the chain fit the budget.
    pub history: Vec<DualAscentState>,
}

/// Dual ascent solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualAscent {
    pub alpha_0: f64,
    /// Iteration cap; `None` means ten times the node count.
    pub max_iterations: Option<usize>,
}

impl Default for DualAscent {
    fn default() -> Self {
        Self {
            alpha_0: 0.0,
            max_iterations: None,
        }
    }
}

impl DualAscent {
    /// Cheapest chain found from `root` to `target` using at most
    /// `n_uav + 1` nodes (the root plus one node per UAV).
    pub fn solve<G, F>(
        &self,
        g: &G,
        root: NodeId,
        target: NodeId,
        n_uav: usize,
        edge_cost: F,
    ) -> Result<ChainSolution, RelayError>
    where
        G: Digraph + ?Sized,
        F: Fn(NodeId, NodeId) -> f64,
    {
        let n = g.node_count();
        for v in [root, target] {
            if v.index() >= n {
                return Err(RelayError::NodeOutOfRange(v));
            }
        }
        if n_uav == 0 {
            return Err(RelayError::InvalidBudget);
        }
        let cap = self.max_iterations.unwrap_or(10 * n);
        let max_nodes = n_uav + 1;

        let mut alpha = self.alpha_0;
        let mut history = Vec::new();
        loop {
            let tree = mlmc_tree(g, root, &edge_cost, alpha);
            let Some(chain) = tree.chain_to(target) else {
                return Err(RelayError::Unreachable { target });
            };
            if chain.node_count() <= max_nodes {
                return Ok(ChainSolution {
                    chain,
                    alpha,
                    history,
                });
            }
            if history.len() >= cap {
                return Err(RelayError::IterationCap {
                    target,
                    alpha,
                    iterations: history.len(),
                });
            }

            let mut improving = Vec::new();
            for i in 0..n {
                let u = NodeId::from(i);
                let Some(qu) = tree.depth(u) else { continue };
                let yu = tree.modified_cost(u);
                for &v in g.successors(u) {
                    let Some(qv) = tree.depth(v) else { continue };
                    if qv > qu + 1 {
                        let gain = yu + edge_cost(u, v) + alpha - tree.modified_cost(v);
                        improving.push(((u, v), gain / f64::from(qv - qu - 1)));
                    }
                }
            }
            if improving.is_empty() {
                return Err(RelayError::NoImprovingEdges {
                    target,
                    alpha,
                    iterations: history.len(),
                });
            }
            let min_eps = improving
                .iter()
                .map(|&(_, e)| e)
                .fold(f64::INFINITY, f64::min);
            // A rounding-level epsilon marks a tie the comparator already
            // accepts; step past it so alpha always moves.
            let epsilon = min_eps.max(2.0 * COST_TOLERANCE);
            history.push(DualAscentState {
                alpha,
                target_depth: chain.length() as u32,
                improving_edges: improving,
                epsilon,
            });
            alpha += epsilon;
        }
    }
}

/// Dual ascent from the graph's base node with the default settings and
/// the given initial penalty.
pub fn dual_ascent_chain<F>(
    g: &NavGraph,
    target: NodeId,
    n_uav: usize,
    edge_cost: F,
    alpha_0: f64,
) -> Result<ChainSolution, RelayError>
where
    F: Fn(NodeId, NodeId) -> f64,
{
    DualAscent {
        alpha_0,
        ..DualAscent::default()
    }
    .solve(g, g.base_node(), target, n_uav, edge_cost)
}

/// Sum of `edge_cost` over the links of a valid chain.
pub fn chain_cost<G, F>(g: &G, chain: &Chain, edge_cost: F) -> Result<f64, RelayError>
where
    G: Digraph + ?Sized,
    F: Fn(NodeId, NodeId) -> f64,
{
    chain.validate(g)?;
    Ok(chain.links().map(|(a, b)| edge_cost(a, b)).sum())
}
