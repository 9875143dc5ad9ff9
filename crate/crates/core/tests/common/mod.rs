//! Brute-force oracles and random instance generators shared by the
//! integration tests.

#![allow(dead_code)]

use std::cmp::Ordering;

use rand::Rng;
use relaycov::graph::{AdjacencyGraph, Digraph, NodeId};
use relaycov::relay::COST_TOLERANCE;

/// Dense table of directed edge costs.
#[derive(Debug, Clone)]
pub struct CostTable {
    n: usize,
    costs: Vec<f64>,
}

impl CostTable {
    pub fn get(&self, a: NodeId, b: NodeId) -> f64 {
        self.costs[a.index() * self.n + b.index()]
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: AdjacencyGraph,
    pub costs: CostTable,
}

impl Instance {
    pub fn cost(&self, a: NodeId, b: NodeId) -> f64 {
        self.costs.get(a, b)
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }
}

/// Connected graph on 2..=`max_nodes` nodes: a random spanning tree plus
/// extra links, both directions present, independent positive costs per
/// direction. Integer costs make sums exact.
pub fn random_instance<R: Rng>(rng: &mut R, max_nodes: usize, integer_costs: bool) -> Instance {
    let n = rng.gen_range(2..=max_nodes);
    let density = rng.gen_range(0.1..0.7);
    let mut pairs = Vec::new();
    for i in 1..n {
        pairs.push((NodeId::from(rng.gen_range(0..i)), NodeId::from(i)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                pairs.push((NodeId::from(i), NodeId::from(j)));
            }
        }
    }
    let graph = AdjacencyGraph::undirected(n, pairs);
    let costs = (0..n * n)
        .map(|_| {
            if integer_costs {
                f64::from(rng.gen_range(1..=9u32))
            } else {
                rng.gen_range(0.05..10.0)
            }
        })
        .collect();
    Instance {
        graph,
        costs: CostTable { n, costs },
    }
}

/// Every simple path starting at `root`, including the trivial one.
pub fn simple_paths<G: Digraph>(g: &G, root: NodeId) -> Vec<Vec<NodeId>> {
    fn walk<G: Digraph>(
        g: &G,
        path: &mut Vec<NodeId>,
        on_path: &mut [bool],
        out: &mut Vec<Vec<NodeId>>,
    ) {
        out.push(path.clone());
        let last = *path.last().unwrap();
        for &next in g.successors(last) {
            if !on_path[next.index()] {
                on_path[next.index()] = true;
                path.push(next);
                walk(g, path, on_path, out);
                path.pop();
                on_path[next.index()] = false;
            }
        }
    }
    let mut on_path = vec![false; g.node_count()];
    on_path[root.index()] = true;
    let mut out = Vec::new();
    walk(g, &mut vec![root], &mut on_path, &mut out);
    out
}

pub fn path_cost(path: &[NodeId], cost: impl Fn(NodeId, NodeId) -> f64) -> f64 {
    path.windows(2).map(|w| cost(w[0], w[1])).sum()
}

/// (cost, length) ordering with cost first, equal within tolerance.
pub fn compare_labels(a: (f64, usize), b: (f64, usize)) -> Ordering {
    if (a.0 - b.0).abs() <= COST_TOLERANCE {
        a.1.cmp(&b.1)
    } else {
        a.0.total_cmp(&b.0)
    }
}

/// Minimum compound label of every node over all simple paths from `root`,
/// with `alpha` added to every link.
pub fn brute_labels<G: Digraph>(
    g: &G,
    root: NodeId,
    cost: impl Fn(NodeId, NodeId) -> f64,
    alpha: f64,
) -> Vec<Option<(f64, usize)>> {
    let mut best: Vec<Option<(f64, usize)>> = vec![None; g.node_count()];
    for path in simple_paths(g, root) {
        let label = (path_cost(&path, |a, b| cost(a, b) + alpha), path.len() - 1);
        let slot = &mut best[path.last().unwrap().index()];
        if slot.is_none_or(|cur| compare_labels(label, cur) == Ordering::Less) {
            *slot = Some(label);
        }
    }
    best
}

/// Cheapest original cost from `root` to `target` over simple paths with
/// at most `max_nodes` nodes; `None` when no such path exists.
pub fn brute_hop_optimum<G: Digraph>(
    g: &G,
    root: NodeId,
    target: NodeId,
    max_nodes: usize,
    cost: impl Fn(NodeId, NodeId) -> f64,
) -> Option<f64> {
    simple_paths(g, root)
        .into_iter()
        .filter(|p| *p.last().unwrap() == target && p.len() <= max_nodes)
        .map(|p| path_cost(&p, &cost))
        .min_by(f64::total_cmp)
}

/// Fewest links from `root` to every node.
pub fn hop_distances<G: Digraph>(g: &G, root: NodeId) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.node_count()];
    dist[root.index()] = Some(0);
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u.index()].unwrap();
        for &v in g.successors(u) {
            if dist[v.index()].is_none() {
                dist[v.index()] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}
