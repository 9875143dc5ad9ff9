//! Joint area coverage and relay-chain positioning for a UAV swarm tied to
//! a base station.
//!
//! One UAV (the master) roams freely under a Node Count policy; the others
//! form a relay chain back to the base. The chain is the cheapest one the
//! available UAVs can occupy, found with a cost-first shortest-path tree and
//! dual ascent on a uniform per-link penalty. Adding a visit-count term to
//! the link cost bends the chain over rarely visited ground so the relays
//! help with coverage too.
//!
//! - [`graph`]: lattice navigation graph, reachability and link costs
//! - [`relay`]: MLMC tree and the hop-limited chain solver
//! - [`coverage`]: visit counts, Node Count and the hybrid link cost
//! - [`sim`]: interleaved-round swarm simulation
//! - [`metrics`]: coverage and cost statistics, CSV exports
//! - [`config`], [`experiment`]: scenario files and the batch runner

pub mod config;
pub mod coverage;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod relay;
pub mod sim;

pub use config::ScenarioConfig;
pub use coverage::{coverage_cost, node_count_step, total_cost, HybridCost, VisitCounts};
pub use graph::{
    build_grid_graph, comm_cost, comm_reachable, Digraph, GridSpec, NavGraph, NodeId, Position,
    Rect,
};
pub use metrics::{CoverageGoal, ExperimentSummary, RoundRecord};
pub use relay::{
    chain_cost, dual_ascent_chain, mlmc_tree, Chain, DualAscent, MlmcTree, RelayError,
};
pub use sim::{run_round, SimParams, Simulation, SwarmState};
