//! Discretized navigation graph.
//!
//! The map is a rectangle sampled on an axis-aligned square lattice. Two
//! lattice nodes are linked (in both directions) when they are within the
//! communication range and the straight segment between them does not pass
//! through an obstacle rectangle. Connectivity is governed by range alone, so
//! a range of `spacing * sqrt(2)` or more yields the 8-neighborhood, larger
//! ranges yield denser graphs.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used for geometric comparisons (distances, boundary tests).
const GEOM_EPS: f64 = 1e-9;

/// Number of evenly spaced samples used to estimate how cluttered a link is.
pub const CLUTTER_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index exceeds u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// A point on the map, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(&self, other: &Position, t: f64) -> Position {
        Position::new(
            self.x * (1.0 - t) + other.x * t,
            self.y * (1.0 - t) + other.y * t,
        )
    }
}

/// Axis-aligned obstacle rectangle. Its boundary belongs to the obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    /// Builds a rectangle from two opposite corners, in any order.
    pub fn from_corners(a: Position, b: Position) -> Self {
        Self {
            min_x: a.x.min(b.x),
            min_y: a.y.min(b.y),
            max_x: a.x.max(b.x),
            max_y: a.y.max(b.y),
        }
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.min_x - GEOM_EPS
            && p.x <= self.max_x + GEOM_EPS
            && p.y >= self.min_y - GEOM_EPS
            && p.y <= self.max_y + GEOM_EPS
    }

    fn contains_strictly(&self, p: &Position) -> bool {
        p.x > self.min_x + GEOM_EPS
            && p.x < self.max_x - GEOM_EPS
            && p.y > self.min_y + GEOM_EPS
            && p.y < self.max_y - GEOM_EPS
    }

    /// Euclidean distance from `p` to the rectangle (0 inside).
    pub fn distance_to(&self, p: &Position) -> f64 {
        let dx = (self.min_x - p.x).max(0.0).max(p.x - self.max_x);
        let dy = (self.min_y - p.y).max(0.0).max(p.y - self.max_y);
        dx.hypot(dy)
    }

    /// True when the segment `a`-`b` passes through the open interior of the
    /// rectangle. Grazing an edge or a corner is not a crossing.
    pub fn crosses_segment(&self, a: &Position, b: &Position) -> bool {
        // Liang-Barsky clipping against the closed rectangle.
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        let planes = [
            (-dx, a.x - self.min_x),
            (dx, self.max_x - a.x),
            (-dy, a.y - self.min_y),
            (dy, self.max_y - a.y),
        ];
        for (p, q) in planes {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
                continue;
            }
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return false;
                }
                t0 = t0.max(r);
            } else {
                if r < t0 {
                    return false;
                }
                t1 = t1.min(r);
            }
        }
        if t1 - t0 <= GEOM_EPS {
            return false;
        }
        // A chord of a convex set is either along the boundary or its
        // midpoint is interior.
        let mid = a.lerp(b, 0.5 * (t0 + t1));
        self.contains_strictly(&mid)
    }
}

/// Link quality model: cost grows linearly with distance up to the range,
/// plus a penalty proportional to how much of the link runs near obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommModel {
    pub d_comm_max: f64,
    pub c_comm_max: f64,
    pub obstacle_weight: f64,
    pub clutter_radius: f64,
    /// Multiplier on `d_comm_max` applied to reachability only. Values below
    /// 1 force tighter chains so that non-consecutive relays can still talk.
    pub link_margin: f64,
}

impl CommModel {
    /// Model with the default penalty (`0.2 * c_comm_max`, radius = spacing).
    pub fn new(d_comm_max: f64, c_comm_max: f64, spacing: f64) -> Self {
        Self {
            d_comm_max,
            c_comm_max,
            obstacle_weight: 0.2 * c_comm_max,
            clutter_radius: spacing,
            link_margin: 1.0,
        }
    }

    pub fn reach(&self) -> f64 {
        self.d_comm_max * self.link_margin
    }

    fn reachable(&self, a: &Position, b: &Position, obstacles: &[Rect]) -> bool {
        a.distance(b) <= self.reach() + GEOM_EPS
            && !obstacles.iter().any(|r| r.crosses_segment(a, b))
    }

    fn cost(&self, a: &Position, b: &Position, obstacles: &[Rect]) -> f64 {
        let d = a.distance(b);
        let base = self.c_comm_max * (d / self.d_comm_max).min(1.0);
        if obstacles.is_empty() || self.obstacle_weight == 0.0 {
            return base;
        }
        let cluttered = (0..CLUTTER_SAMPLES)
            .filter(|&i| {
                let t = i as f64 / (CLUTTER_SAMPLES - 1) as f64;
                let p = a.lerp(b, t);
                obstacles
                    .iter()
                    .any(|r| r.distance_to(&p) <= self.clutter_radius + GEOM_EPS)
            })
            .count();
        base + self.obstacle_weight * cluttered as f64 / CLUTTER_SAMPLES as f64
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid map parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("spacing {spacing} m is larger than the map extent {width} x {height} m")]
    SpacingTooLarge {
        spacing: f64,
        width: f64,
        height: f64,
    },
    #[error("base station at ({x}, {y}) is outside the map")]
    BaseOutsideMap { x: f64, y: f64 },
    #[error("base station at ({x}, {y}) lies inside an obstacle")]
    BaseInObstacle { x: f64, y: f64 },
}

/// Inputs for [`build_grid_graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: f64,
    pub height: f64,
    pub spacing: f64,
    pub base: Position,
    pub obstacles: Vec<Rect>,
    pub comm: CommModel,
}

impl GridSpec {
    pub fn new(
        width: f64,
        height: f64,
        spacing: f64,
        base: Position,
        d_comm_max: f64,
        c_comm_max: f64,
    ) -> Self {
        Self {
            width,
            height,
            spacing,
            base,
            obstacles: Vec::new(),
            comm: CommModel::new(d_comm_max, c_comm_max, spacing),
        }
    }

    pub fn with_obstacles(mut self, obstacles: Vec<Rect>) -> Self {
        self.obstacles = obstacles;
        self
    }
}

/// Minimal directed-graph view used by the planning algorithms, so they can
/// run on navigation graphs and on hand-built test topologies alike.
pub trait Digraph {
    fn node_count(&self) -> usize;
    /// Out-neighbors of `n`, sorted by id.
    fn successors(&self, n: NodeId) -> &[NodeId];

    fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.successors(from).binary_search(&to).is_ok()
    }
}

/// Compressed adjacency storage shared by both graph types.
#[derive(Debug, Clone, PartialEq, Default)]
struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
}

impl Adjacency {
    fn from_lists(lists: Vec<Vec<NodeId>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut l in lists {
            l.sort_unstable();
            l.dedup();
            targets.extend(l);
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    fn successors(&self, n: NodeId) -> &[NodeId] {
        let i = n.index();
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    fn edge_index(&self, from: NodeId, to: NodeId) -> Option<usize> {
        let start = self.offsets[from.index()];
        self.successors(from)
            .binary_search(&to)
            .ok()
            .map(|k| start + k)
    }
}

/// Plain directed graph without geometry, built from an edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    node_count: usize,
    adj: Adjacency,
}

impl AdjacencyGraph {
    /// Builds a graph from directed edges. Self-loops and duplicates are dropped.
    pub fn from_edges(
        node_count: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Self {
        let mut lists = vec![Vec::new(); node_count];
        for (a, b) in edges {
            assert!(
                a.index() < node_count && b.index() < node_count,
                "edge endpoint out of range"
            );
            if a != b {
                lists[a.index()].push(b);
            }
        }
        Self {
            node_count,
            adj: Adjacency::from_lists(lists),
        }
    }

    /// Builds a graph inserting every pair in both directions.
    pub fn undirected(
        node_count: usize,
        pairs: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Self {
        let edges: Vec<_> = pairs
            .into_iter()
            .flat_map(|(a, b)| [(a, b), (b, a)])
            .collect();
        Self::from_edges(node_count, edges)
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.node_count).flat_map(move |i| {
            let n = NodeId::from(i);
            self.adj.successors(n).iter().map(move |&m| (n, m))
        })
    }
}

impl Digraph for AdjacencyGraph {
    fn node_count(&self) -> usize {
        self.node_count
    }

    fn successors(&self, n: NodeId) -> &[NodeId] {
        self.adj.successors(n)
    }
}

/// Lattice navigation graph. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NavGraph {
    cols: usize,
    rows: usize,
    spacing: f64,
    positions: Vec<Position>,
    obstacle: Vec<bool>,
    obstacles: Vec<Rect>,
    adj: Adjacency,
    /// Communication cost per stored edge, aligned with `adj.targets`.
    edge_comm: Vec<f64>,
    base: NodeId,
    /// Fewest links from the base, `u32::MAX` when unreachable.
    base_hops: Vec<u32>,
    comm: CommModel,
}

impl NavGraph {
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn base_node(&self) -> NodeId {
        self.base
    }

    pub fn comm_model(&self) -> &CommModel {
        &self.comm
    }

    pub fn obstacles(&self) -> &[Rect] {
        &self.obstacles
    }

    pub fn position(&self, n: NodeId) -> Position {
        self.positions[n.index()]
    }

    pub fn is_obstacle(&self, n: NodeId) -> bool {
        self.obstacle[n.index()]
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.index() < self.positions.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.positions.len()).map(NodeId::from)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.targets.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes()
            .flat_map(move |n| self.adj.successors(n).iter().map(move |&m| (n, m)))
    }

    /// Cached communication cost of a stored edge.
    pub fn edge_comm_cost(&self, from: NodeId, to: NodeId) -> Option<f64> {
        self.adj.edge_index(from, to).map(|i| self.edge_comm[i])
    }

    /// Node at lattice cell (`col`, `row`); row 0 is the lowest y.
    pub fn node_at(&self, col: usize, row: usize) -> Option<NodeId> {
        (col < self.cols && row < self.rows).then(|| NodeId::from(row * self.cols + col))
    }

    /// Lattice node nearest to `p`, lowest id on ties.
    /// Fewest links between the base and `n`, if connected.
    pub fn hops_from_base(&self, n: NodeId) -> Option<u32> {
        Some(self.base_hops[n.index()]).filter(|&h| h != u32::MAX)
    }

    pub fn nearest_node(&self, p: &Position) -> NodeId {
        nearest(&self.positions, p)
    }
}

impl Digraph for NavGraph {
    fn node_count(&self) -> usize {
        self.positions.len()
    }

    fn successors(&self, n: NodeId) -> &[NodeId] {
        self.adj.successors(n)
    }
}

fn nearest(positions: &[Position], p: &Position) -> NodeId {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, q) in positions.iter().enumerate() {
        let d = q.distance(p);
        if d < best_d - GEOM_EPS {
            best = i;
            best_d = d;
        }
    }
    NodeId::from(best)
}

fn check_positive(name: &'static str, v: f64) -> Result<(), GraphError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(GraphError::InvalidParameter {
            name,
            reason: format!("must be positive and finite, got {v}"),
        })
    }
}

/// Samples the map on a square lattice (node centers at `(i + 0.5) * spacing`)
/// and links every pair of free nodes that can communicate.
pub fn build_grid_graph(spec: &GridSpec) -> Result<NavGraph, GraphError> {
    check_positive("width", spec.width)?;
    check_positive("height", spec.height)?;
    check_positive("spacing", spec.spacing)?;
    check_positive("d_comm_max", spec.comm.d_comm_max)?;
    check_positive("c_comm_max", spec.comm.c_comm_max)?;
    check_positive("link_margin", spec.comm.link_margin)?;
    if !(spec.comm.obstacle_weight >= 0.0 && spec.comm.clutter_radius >= 0.0) {
        return Err(GraphError::InvalidParameter {
            name: "obstacle_weight",
            reason: "obstacle penalty parameters must be non-negative".into(),
        });
    }
    if spec.comm.d_comm_max < spec.spacing {
        return Err(GraphError::InvalidParameter {
            name: "d_comm_max",
            reason: format!(
                "range {} m is shorter than the spacing {} m",
                spec.comm.d_comm_max, spec.spacing
            ),
        });
    }

    let cols = (spec.width / spec.spacing + GEOM_EPS).floor() as usize;
    let rows = (spec.height / spec.spacing + GEOM_EPS).floor() as usize;
    if cols == 0 || rows == 0 {
        return Err(GraphError::SpacingTooLarge {
            spacing: spec.spacing,
            width: spec.width,
            height: spec.height,
        });
    }
    let b = spec.base;
    if !(b.x >= 0.0 && b.x <= spec.width && b.y >= 0.0 && b.y <= spec.height) {
        return Err(GraphError::BaseOutsideMap { x: b.x, y: b.y });
    }
    if spec.obstacles.iter().any(|r| r.contains(&b)) {
        return Err(GraphError::BaseInObstacle { x: b.x, y: b.y });
    }

    let positions: Vec<Position> = (0..rows)
        .flat_map(|r| {
            (0..cols).map(move |c| {
                Position::new(
                    (c as f64 + 0.5) * spec.spacing,
                    (r as f64 + 0.5) * spec.spacing,
                )
            })
        })
        .collect();
    let obstacle: Vec<bool> = positions
        .iter()
        .map(|p| spec.obstacles.iter().any(|r| r.contains(p)))
        .collect();
    let base = nearest(&positions, &b);
    if obstacle[base.index()] {
        return Err(GraphError::BaseInObstacle { x: b.x, y: b.y });
    }

    // Only lattice offsets within range can be linked.
    let reach = spec.comm.reach();
    let window = (reach / spec.spacing + GEOM_EPS).floor() as isize;
    let mut lists = vec![Vec::new(); positions.len()];
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let i = (r as usize) * cols + c as usize;
            if obstacle[i] {
                continue;
            }
            for dr in -window..=window {
                for dc in -window..=window {
                    let (r2, c2) = (r + dr, c + dc);
                    if (dr, dc) == (0, 0)
                        || r2 < 0
                        || c2 < 0
                        || r2 >= rows as isize
                        || c2 >= cols as isize
                    {
                        continue;
                    }
                    let j = (r2 as usize) * cols + c2 as usize;
                    // Each unordered pair is tested once and inserted both ways.
                    if j <= i || obstacle[j] {
                        continue;
                    }
                    if spec
                        .comm
                        .reachable(&positions[i], &positions[j], &spec.obstacles)
                    {
                        lists[i].push(NodeId::from(j));
                        lists[j].push(NodeId::from(i));
                    }
                }
            }
        }
    }
    let adj = Adjacency::from_lists(lists);

    let mut edge_comm = Vec::with_capacity(adj.targets.len());
    for i in 0..positions.len() {
        let n = NodeId::from(i);
        for &m in adj.successors(n) {
            edge_comm.push(pair_cost(&spec.comm, &positions, &spec.obstacles, n, m));
        }
    }

    let mut g = NavGraph {
        cols,
        rows,
        spacing: spec.spacing,
        positions,
        obstacle,
        obstacles: spec.obstacles.clone(),
        adj,
        edge_comm,
        base,
        base_hops: Vec::new(),
        comm: spec.comm,
    };
    g.base_hops = hop_distances(&g, base)
        .into_iter()
        .map(|h| h.unwrap_or(u32::MAX))
        .collect();
    Ok(g)
}

/// Fewest links from `root` to every node (breadth-first search).
pub fn hop_distances<G: Digraph + ?Sized>(g: &G, root: NodeId) -> Vec<Option<u32>> {
    let mut hops = vec![None; g.node_count()];
    hops[root.index()] = Some(0);
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        let h = hops[u.index()].unwrap_or_default();
        for &v in g.successors(u) {
            if hops[v.index()].is_none() {
                hops[v.index()] = Some(h + 1);
                queue.push_back(v);
            }
        }
    }
    hops
}

fn pair_cost(
    comm: &CommModel,
    positions: &[Position],
    obstacles: &[Rect],
    n: NodeId,
    m: NodeId,
) -> f64 {
    // Sample in a canonical direction so the cost is exactly symmetric.
    let (a, b) = if n <= m { (n, m) } else { (m, n) };
    comm.cost(&positions[a.index()], &positions[b.index()], obstacles)
}

/// Communication reachability between two nodes of `g`.
pub fn comm_reachable(g: &NavGraph, n: NodeId, m: NodeId) -> bool {
    g.comm
        .reachable(&g.position(n), &g.position(m), &g.obstacles)
}

/// Communication cost between two nodes of `g`, edge or not.
pub fn comm_cost(g: &NavGraph, n: NodeId, m: NodeId) -> f64 {
    pair_cost(&g.comm, &g.positions, &g.obstacles, n, m)
}
