//! Experiment metrics: rounds to k-coverage, visit distribution and chain
//! cost statistics, plus their CSV / text exports.

use std::fmt;
use std::io::{self, Write};

use crate::coverage::VisitCounts;
use crate::graph::{NavGraph, NodeId};
use crate::relay::Chain;

/// Notable things that happened during a round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventTag {
    /// No candidate move admitted a chain; master and chain held.
    Stalled,
    /// The master sat beyond the relay budget (relays withdrew) and stepped
    /// back one link along its last chain.
    Retreated(NodeId),
    /// The master's preferred move had no feasible chain.
    Vetoed(NodeId),
    Promoted {
        uav: usize,
    },
    TaskStarted {
        uav: usize,
        node: NodeId,
    },
    TaskCompleted {
        uav: usize,
        node: NodeId,
    },
    TaskQueued {
        uav: usize,
        node: NodeId,
    },
    Removed {
        uav: usize,
    },
    Detached {
        uav: usize,
    },
    Reintegrated {
        uav: usize,
    },
    /// No UAV left that can act as master; the run ends.
    Halted,
}

impl fmt::Display for EventTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventTag::Stalled => write!(f, "stalled"),
            EventTag::Retreated(n) => write!(f, "retreated:{}", n.0),
            EventTag::Vetoed(n) => write!(f, "vetoed:{}", n.0),
            EventTag::Promoted { uav } => write!(f, "promoted:{uav}"),
            EventTag::TaskStarted { uav, node } => write!(f, "task-started:{uav}@{}", node.0),
            EventTag::TaskCompleted { uav, node } => write!(f, "task-completed:{uav}@{}", node.0),
            EventTag::TaskQueued { uav, node } => write!(f, "task-queued:{uav}@{}", node.0),
            EventTag::Removed { uav } => write!(f, "removed:{uav}"),
            EventTag::Detached { uav } => write!(f, "detached:{uav}"),
            EventTag::Reintegrated { uav } => write!(f, "reintegrated:{uav}"),
            EventTag::Halted => write!(f, "halted"),
        }
    }
}

/// Outcome of one interleaved round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub chain: Chain,
    /// Communication cost of the chain.
    pub comm_cost: f64,
    /// Communication plus coverage cost of the chain, with the counts the
    /// chain was planned on.
    pub total_cost: f64,
    /// Nodes occupied at the end of the round, sorted, each once.
    pub occupied: Vec<NodeId>,
    pub events: Vec<EventTag>,
    /// UAV budget given to the relay solver (master included).
    pub budget: usize,
    pub dual_ascent_iterations: usize,
}

impl RoundRecord {
    pub fn is_stall(&self) -> bool {
        self.events.contains(&EventTag::Stalled)
    }

    pub fn is_terminal(&self) -> bool {
        self.events.contains(&EventTag::Halted)
    }
}

/// Nodes that have to be visited for coverage to count as complete: free
/// nodes the swarm can reach from the base.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGoal {
    member: Vec<bool>,
    nodes: Vec<NodeId>,
}

impl CoverageGoal {
    /// Every free node connected to the base.
    pub fn reachable(g: &NavGraph) -> Self {
        Self::within_hops(g, usize::MAX)
    }

    /// Free nodes at most `max_hops` links from the base. A fleet of `F`
    /// UAVs can put its master at most `F` links away.
    pub fn within_hops(g: &NavGraph, max_hops: usize) -> Self {
        let member: Vec<bool> = g
            .nodes()
            .map(|n| {
                !g.is_obstacle(n) && g.hops_from_base(n).is_some_and(|h| h as usize <= max_hops)
            })
            .collect();
        let nodes = member
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| NodeId::from(i))
            .collect();
        Self { member, nodes }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.member.get(n.index()).copied().unwrap_or(false)
    }

    pub fn is_met(&self, counts: &[u64], k: u64) -> bool {
        self.nodes.iter().all(|n| counts[n.index()] >= k)
    }
}

/// First round after which every goal node has at least `k` visits,
/// replayed from the records' occupied sets.
pub fn iterations_to_k_coverage(
    records: &[RoundRecord],
    goal: &CoverageGoal,
    k: u64,
) -> Option<u64> {
    assert!(k >= 1, "k must be at least 1");
    let size = goal.member.len();
    let mut counts = vec![0u64; size];
    let mut missing = goal.len();
    for r in records {
        for &n in &r.occupied {
            let c = &mut counts[n.index()];
            *c += 1;
            if *c == k && goal.contains(n) {
                missing -= 1;
            }
        }
        if missing == 0 {
            return Some(r.round);
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        (n > 0).then(|| Stats {
            min,
            max,
            mean: sum / n as f64,
        })
    }
}

/// Visit statistics over the goal nodes (cumulative counts).
pub fn visit_stats(counts: &VisitCounts, goal: &CoverageGoal) -> Option<Stats> {
    Stats::of(goal.nodes().iter().map(|&n| counts.cumulative(n) as f64))
}

/// Chain communication cost statistics, one sample per planned round.
pub fn comm_stats(records: &[RoundRecord]) -> Option<Stats> {
    Stats::of(
        records
            .iter()
            .filter(|r| !r.is_terminal())
            .map(|r| r.comm_cost),
    )
}

/// Goal nodes holding the maximal visit count.
pub fn peak_nodes(counts: &VisitCounts, goal: &CoverageGoal) -> Vec<NodeId> {
    let Some(max) = goal.nodes().iter().map(|&n| counts.cumulative(n)).max() else {
        return Vec::new();
    };
    goal.nodes()
        .iter()
        .copied()
        .filter(|&n| counts.cumulative(n) == max)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub beta: f64,
    pub seed: u64,
    pub k: u64,
    pub rounds: u64,
    pub goal_nodes: usize,
    pub iterations_to_k: Option<u64>,
    pub visits: Stats,
    pub comm: Stats,
    pub peak_nodes: Vec<NodeId>,
    pub stalled_rounds: usize,
    pub halted: bool,
}

impl ExperimentSummary {
    pub fn from_run(
        records: &[RoundRecord],
        counts: &VisitCounts,
        goal: &CoverageGoal,
        k: u64,
        beta: f64,
        seed: u64,
    ) -> Self {
        let zero = Stats {
            min: 0.0,
            max: 0.0,
            mean: 0.0,
        };
        Self {
            beta,
            seed,
            k,
            rounds: records.iter().filter(|r| !r.is_terminal()).count() as u64,
            goal_nodes: goal.len(),
            iterations_to_k: iterations_to_k_coverage(records, goal, k),
            visits: visit_stats(counts, goal).unwrap_or(zero),
            comm: comm_stats(records).unwrap_or(zero),
            peak_nodes: peak_nodes(counts, goal),
            stalled_rounds: records.iter().filter(|r| r.is_stall()).count(),
            halted: records.iter().any(RoundRecord::is_terminal),
        }
    }

    /// Flat `key=value` text form.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        let peaks: Vec<String> = self.peak_nodes.iter().map(|n| n.0.to_string()).collect();
        writeln!(w, "beta={}", self.beta)?;
        writeln!(w, "seed={}", self.seed)?;
        writeln!(w, "k={}", self.k)?;
        writeln!(w, "rounds={}", self.rounds)?;
        writeln!(w, "goal_nodes={}", self.goal_nodes)?;
        match self.iterations_to_k {
            Some(i) => writeln!(w, "iterations_to_k={i}")?,
            None => writeln!(w, "iterations_to_k=NONE")?,
        }
        writeln!(w, "visit_min={:.6}", self.visits.min)?;
        writeln!(w, "visit_max={:.6}", self.visits.max)?;
        writeln!(w, "visit_mean={:.6}", self.visits.mean)?;
        writeln!(w, "comm_cost_min={:.6}", self.comm.min)?;
        writeln!(w, "comm_cost_max={:.6}", self.comm.max)?;
        writeln!(w, "comm_cost_mean={:.6}", self.comm.mean)?;
        writeln!(w, "peak_nodes={}", peaks.join(";"))?;
        writeln!(w, "stalled_rounds={}", self.stalled_rounds)?;
        writeln!(w, "halted={}", self.halted)?;
        Ok(())
    }
}

/// Visit grid: a `rows,cols` header line, then one line per lattice row
/// (row 0 = lowest y) with the cumulative counts of its nodes.
pub fn write_visit_grid<W: Write>(w: W, g: &NavGraph, counts: &VisitCounts) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    out.write_record([g.rows().to_string(), g.cols().to_string()])?;
    for r in 0..g.rows() {
        let row = (0..g.cols()).map(|c| {
            let n = g.node_at(c, r).expect("in lattice");
            counts.cumulative(n).to_string()
        });
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Per-round table: `round,chain_length,comm_cost,total_cost`.
pub fn write_round_table<W: Write>(w: W, records: &[RoundRecord]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["round", "chain_length", "comm_cost", "total_cost"])?;
    for r in records.iter().filter(|r| !r.is_terminal()) {
        out.write_record([
            r.round.to_string(),
            r.chain.length().to_string(),
            format!("{:.6}", r.comm_cost),
            format!("{:.6}", r.total_cost),
        ])?;
    }
    out.flush()?;
    Ok(())
}
