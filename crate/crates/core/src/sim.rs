//! Interleaved-round swarm simulation.
//!
//! Each round the master commits a move, the rest of the swarm solves a
//! hybrid relay-coverage chain from the base to the master's new node and
//! takes its positions, then every occupied node is counted as visited.
//! Secondary tasks, UAV loss and reintegration are handled between the
//! planning steps.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::coverage::{
    node_count_candidates, node_count_step, CoverageError, HybridCost, VisitCounts,
};
use crate::graph::{Digraph, NavGraph, NodeId};
use crate::metrics::{EventTag, RoundRecord};
use crate::relay::{Chain, DualAscent, RelayError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("the swarm has no UAV able to act as master")]
    NoUavs,
    #[error("fleet size must be at least 1")]
    EmptyFleet,
    #[error("unknown UAV {0}")]
    UnknownUav(usize),
    #[error("UAV {uav} cannot be {action} while {role:?}")]
    InvalidRole {
        uav: usize,
        role: Role,
        action: &'static str,
    },
    #[error("node {0} is not a free node of the graph")]
    InvalidNode(NodeId),
    #[error("chain needs {needed} relays but only {available} are free")]
    InsufficientUavs { needed: usize, available: usize },
    #[error("scripted waypoint {to} is not adjacent to {from}")]
    WaypointNotAdjacent { from: NodeId, to: NodeId },
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    #[error(transparent)]
    Relay(#[from] RelayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Master,
    Chain,
    /// Present but out of contact; navigates on its own count snapshot.
    Detached,
    Departed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Uav {
    pub id: usize,
    pub node: NodeId,
    pub role: Role,
    /// Rounds of hovering left on a secondary task.
    pub busy_rounds_remaining: u32,
    local_counts: Option<VisitCounts>,
}

impl Uav {
    pub fn is_active(&self) -> bool {
        matches!(self.role, Role::Master | Role::Chain)
    }

    pub fn local_counts(&self) -> Option<&VisitCounts> {
        self.local_counts.as_ref()
    }
}

/// A node where a UAV has to hover for `service_rounds` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetSpec {
    pub node: NodeId,
    pub service_rounds: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStatus {
    Open,
    Queued(usize),
    InService(usize),
    Done,
}

/// Scheduled membership change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwarmEvent {
    Remove(usize),
    Detach(usize),
    /// Bring a departed or detached UAV back, optionally at a given node
    /// (default: where it is for a detached UAV, the base for a departed one).
    Reintegrate {
        uav: usize,
        node: Option<NodeId>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MasterPolicy {
    NodeCount,
    /// One adjacent node per round; Node Count once the list runs out.
    Waypoints(Vec<NodeId>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub beta: f64,
    pub seed: u64,
    pub solver: DualAscent,
    pub policy: MasterPolicy,
}

impl SimParams {
    pub fn new(beta: f64, seed: u64) -> Self {
        Self {
            beta,
            seed,
            solver: DualAscent::default(),
            policy: MasterPolicy::NodeCount,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub uavs: Vec<Uav>,
    /// Node the chain is built towards (the master's node).
    pub master_target: NodeId,
    pub round: u64,
    /// Last planned chain.
    pub chain: Chain,
    base: NodeId,
    targets: Vec<(TargetSpec, TaskStatus)>,
    /// UAVs holding at a reached target until the running task ends.
    queue: VecDeque<(usize, usize)>,
    waypoint_cursor: usize,
    halted: bool,
}

impl SwarmState {
    /// Fleet parked at the base, UAV 0 as master.
    pub fn new(g: &NavGraph, fleet_size: usize, targets: &[TargetSpec]) -> Result<Self, SimError> {
        if fleet_size == 0 {
            return Err(SimError::EmptyFleet);
        }
        for t in targets {
            if !g.contains(t.node) || g.is_obstacle(t.node) {
                return Err(SimError::InvalidNode(t.node));
            }
        }
        let base = g.base_node();
        let uavs = (0..fleet_size)
            .map(|id| Uav {
                id,
                node: base,
                role: if id == 0 { Role::Master } else { Role::Chain },
                busy_rounds_remaining: 0,
                local_counts: None,
            })
            .collect();
        Ok(Self {
            uavs,
            master_target: base,
            round: 0,
            chain: Chain::new(vec![base]),
            base,
            targets: targets.iter().map(|&t| (t, TaskStatus::Open)).collect(),
            queue: VecDeque::new(),
            waypoint_cursor: 0,
            halted: false,
        })
    }

    pub fn fleet_size(&self) -> usize {
        self.uavs.len()
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn master(&self) -> Option<&Uav> {
        self.uavs.iter().find(|u| u.role == Role::Master)
    }

    pub fn uav(&self, id: usize) -> Result<&Uav, SimError> {
        self.uavs.get(id).ok_or(SimError::UnknownUav(id))
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.uavs.iter().filter(|u| u.role == role).count()
    }

    /// Relay UAVs, i.e. non-master members of the swarm.
    pub fn n_uav_available(&self) -> usize {
        self.count_role(Role::Chain)
    }

    pub fn task_status(&self) -> Vec<(TargetSpec, TaskStatus)> {
        self.targets.clone()
    }

    pub fn queued(&self) -> Vec<usize> {
        self.queue.iter().map(|&(id, _)| id).collect()
    }

    fn is_held(&self, id: usize) -> bool {
        self.uavs[id].busy_rounds_remaining > 0 || self.queue.iter().any(|&(q, _)| q == id)
    }

    /// Relay UAVs that can be moved this round.
    pub fn free_relays(&self) -> Vec<usize> {
        self.uavs
            .iter()
            .filter(|u| u.role == Role::Chain && !self.is_held(u.id))
            .map(|u| u.id)
            .collect()
    }

    /// UAV count handed to the relay solver: free relays plus the master.
    pub fn solver_budget(&self) -> usize {
        self.free_relays().len() + 1
    }

    /// Makes `id` the master; the former master joins the relays.
    pub fn promote_master(&mut self, id: usize) -> Result<(), SimError> {
        let role = self.uav(id)?.role;
        match role {
            Role::Master => return Ok(()),
            Role::Chain => {}
            _ => {
                return Err(SimError::InvalidRole {
                    uav: id,
                    role,
                    action: "promoted",
                })
            }
        }
        if let Some(old) = self.uavs.iter_mut().find(|u| u.role == Role::Master) {
            old.role = Role::Chain;
        }
        let new = &mut self.uavs[id];
        new.role = Role::Master;
        self.master_target = new.node;
        Ok(())
    }

    /// Drops any task claim held by `id`; the target becomes open again.
    fn release_tasks(&mut self, id: usize) {
        self.queue.retain(|&(q, _)| q != id);
        for (_, status) in &mut self.targets {
            if matches!(*status, TaskStatus::Queued(u) | TaskStatus::InService(u) if u == id) {
                *status = TaskStatus::Open;
            }
        }
        self.uavs[id].busy_rounds_remaining = 0;
    }

    /// Takes `id` out of the swarm with the given role. A departing master
    /// hands over to the relay nearest to it.
    fn withdraw(
        &mut self,
        g: &NavGraph,
        id: usize,
        role: Role,
        action: &'static str,
    ) -> Result<Vec<EventTag>, SimError> {
        let current = self.uav(id)?.role;
        if !matches!(current, Role::Master | Role::Chain)
            && !(role == Role::Departed && current == Role::Detached)
        {
            return Err(SimError::InvalidRole {
                uav: id,
                role: current,
                action,
            });
        }
        self.release_tasks(id);
        self.uavs[id].role = role;
        let mut events = Vec::new();
        if current == Role::Master {
            let from = g.position(self.uavs[id].node);
            let heir = self
                .uavs
                .iter()
                .filter(|u| u.role == Role::Chain)
                .min_by(|a, b| {
                    let da = g.position(a.node).distance(&from);
                    let db = g.position(b.node).distance(&from);
                    da.total_cmp(&db).then(a.id.cmp(&b.id))
                })
                .map(|u| u.id);
            match heir {
                Some(h) => {
                    self.promote_master(h)?;
                    events.push(EventTag::Promoted { uav: h });
                }
                None => {
                    self.halted = true;
                    events.push(EventTag::Halted);
                }
            }
        }
        Ok(events)
    }

    pub fn remove_uav(&mut self, g: &NavGraph, id: usize) -> Result<Vec<EventTag>, SimError> {
        let mut events = vec![EventTag::Removed { uav: id }];
        events.extend(self.withdraw(g, id, Role::Departed, "removed")?);
        self.uavs[id].local_counts = None;
        Ok(events)
    }

    /// Cuts `id` off the swarm. It keeps a snapshot of the current counts.
    pub fn detach_uav(
        &mut self,
        g: &NavGraph,
        counts: &VisitCounts,
        id: usize,
    ) -> Result<Vec<EventTag>, SimError> {
        let mut events = vec![EventTag::Detached { uav: id }];
        events.extend(self.withdraw(g, id, Role::Detached, "detached")?);
        self.uavs[id].local_counts = Some(counts.clone());
        Ok(events)
    }

    /// Returns `id` to the relay pool, merging what a detached UAV learned
    /// into the swarm counts.
    pub fn reintegrate_uav(
        &mut self,
        g: &NavGraph,
        counts: &mut VisitCounts,
        id: usize,
        node: Option<NodeId>,
    ) -> Result<Vec<EventTag>, SimError> {
        let uav = self.uav(id)?;
        let node = match (uav.role, node) {
            (Role::Detached | Role::Departed, Some(n)) => n,
            (Role::Detached, None) => uav.node,
            (Role::Departed, None) => self.base,
            (role, _) => {
                return Err(SimError::InvalidRole {
                    uav: id,
                    role,
                    action: "reintegrated",
                })
            }
        };
        if !g.contains(node) || g.is_obstacle(node) {
            return Err(SimError::InvalidNode(node));
        }
        let uav = &mut self.uavs[id];
        if let Some(local) = uav.local_counts.take() {
            counts.merge_max(&local);
        }
        uav.node = node;
        uav.role = Role::Chain;
        let mut events = vec![EventTag::Reintegrated { uav: id }];
        if self.halted {
            self.uavs[id].role = Role::Master;
            self.master_target = node;
            self.halted = false;
            events.push(EventTag::Promoted { uav: id });
        }
        Ok(events)
    }

    pub fn apply_event(
        &mut self,
        g: &NavGraph,
        counts: &mut VisitCounts,
        event: SwarmEvent,
    ) -> Result<Vec<EventTag>, SimError> {
        match event {
            SwarmEvent::Remove(id) => self.remove_uav(g, id),
            SwarmEvent::Detach(id) => self.detach_uav(g, counts, id),
            SwarmEvent::Reintegrate { uav, node } => self.reintegrate_uav(g, counts, uav, node),
        }
    }

    /// Structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self, g: &NavGraph) -> Result<(), String> {
        let masters = self.count_role(Role::Master);
        if !self.halted && masters != 1 {
            return Err(format!("{masters} masters"));
        }
        let accounted = self.n_uav_available()
            + masters
            + self.count_role(Role::Departed)
            + self.count_role(Role::Detached);
        if accounted != self.fleet_size() {
            return Err(format!(
                "budget leak: {accounted} of {} UAVs accounted",
                self.fleet_size()
            ));
        }
        if let Some(u) = self
            .uavs
            .iter()
            .find(|u| !g.contains(u.node) || g.is_obstacle(u.node))
        {
            return Err(format!("UAV {} on invalid node {}", u.id, u.node));
        }
        let busy = self
            .uavs
            .iter()
            .filter(|u| u.busy_rounds_remaining > 0)
            .count();
        if busy > 1 {
            return Err(format!("{busy} UAVs busy at once"));
        }
        if let Some(u) = self
            .uavs
            .iter()
            .find(|u| u.busy_rounds_remaining > 0 && u.role != Role::Master)
        {
            return Err(format!("busy UAV {} is not the master", u.id));
        }
        Ok(())
    }

    fn master_index(&self) -> Option<usize> {
        self.uavs.iter().position(|u| u.role == Role::Master)
    }

    /// Advances the running task; on completion hands the master role to
    /// the next queued UAV.
    fn service_tick(&mut self, events: &mut Vec<EventTag>) -> Result<(), SimError> {
        let Some(m) = self.master_index() else {
            return Ok(());
        };
        if self.uavs[m].busy_rounds_remaining > 0 {
            self.uavs[m].busy_rounds_remaining -= 1;
            if self.uavs[m].busy_rounds_remaining == 0 {
                for (spec, status) in &mut self.targets {
                    if *status == TaskStatus::InService(m) {
                        *status = TaskStatus::Done;
                        events.push(EventTag::TaskCompleted {
                            uav: m,
                            node: spec.node,
                        });
                    }
                }
            }
        }
        let in_service = self
            .targets
            .iter()
            .any(|(_, s)| matches!(s, TaskStatus::InService(_)));
        if !in_service {
            if let Some((id, t)) = self.queue.pop_front() {
                self.start_task(id, t, events)?;
            }
        }
        Ok(())
    }

    fn start_task(
        &mut self,
        id: usize,
        target: usize,
        events: &mut Vec<EventTag>,
    ) -> Result<(), SimError> {
        let (spec, status) = &mut self.targets[target];
        *status = TaskStatus::InService(id);
        let spec = *spec;
        self.uavs[id].busy_rounds_remaining = spec.service_rounds;
        if self.uavs[id].role != Role::Master {
            self.promote_master(id)?;
            events.push(EventTag::Promoted { uav: id });
        }
        events.push(EventTag::TaskStarted {
            uav: id,
            node: spec.node,
        });
        Ok(())
    }

    /// UAVs standing on open targets start the task, or queue behind the
    /// one in progress. The master is checked first, then relays by id.
    fn check_targets(&mut self, events: &mut Vec<EventTag>) -> Result<(), SimError> {
        let mut order: Vec<usize> = self.master_index().into_iter().collect();
        order.extend(
            self.uavs
                .iter()
                .filter(|u| u.role == Role::Chain)
                .map(|u| u.id),
        );
        for id in order {
            if self.is_held(id) {
                continue;
            }
            let node = self.uavs[id].node;
            let Some(t) = self
                .targets
                .iter()
                .position(|(s, st)| s.node == node && *st == TaskStatus::Open)
            else {
                continue;
            };
            let busy = self
                .targets
                .iter()
                .any(|(_, s)| matches!(s, TaskStatus::InService(_)));
            if !busy && self.queue.is_empty() {
                self.start_task(id, t, events)?;
            } else {
                self.targets[t].1 = TaskStatus::Queued(id);
                self.queue.push_back((id, t));
                events.push(EventTag::TaskQueued { uav: id, node });
            }
        }
        Ok(())
    }
}

/// Assigns the chain's relay positions to the free relays, repeatedly
/// matching the closest remaining (UAV, position) pair. Ties go to the
/// lower UAV id, then to the position nearer the base.
pub fn assign_chain_positions(
    g: &NavGraph,
    chain: &Chain,
    swarm: &SwarmState,
) -> Result<BTreeMap<usize, NodeId>, SimError> {
    let relays = swarm.free_relays();
    let slots = chain.interior();
    if slots.len() > relays.len() {
        return Err(SimError::InsufficientUavs {
            needed: slots.len(),
            available: relays.len(),
        });
    }
    let mut pairs = Vec::with_capacity(relays.len() * slots.len());
    for &id in &relays {
        let from = g.position(swarm.uavs[id].node);
        for (k, &slot) in slots.iter().enumerate() {
            pairs.push((from.distance(&g.position(slot)), id, k));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut taken_uav = BTreeSet::new();
    let mut taken_slot = vec![false; slots.len()];
    let mut assignment = BTreeMap::new();
    for (_, id, k) in pairs {
        if taken_slot[k] || taken_uav.contains(&id) {
            continue;
        }
        taken_slot[k] = true;
        taken_uav.insert(id);
        assignment.insert(id, slots[k]);
        if assignment.len() == slots.len() {
            break;
        }
    }
    Ok(assignment)
}

/// splitmix64 finalizer; spreads (seed, round, uav) into independent streams.
fn derive_seed(seed: u64, round: u64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(round.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(salt.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Neighbor of `here` closest to the base in links (lowest id on ties),
/// if it is closer than `here`.
fn retreat_step(g: &NavGraph, here: NodeId) -> Option<NodeId> {
    let hops = |n: NodeId| g.hops_from_base(n).unwrap_or(u32::MAX);
    g.successors(here)
        .iter()
        .copied()
        .min_by_key(|&n| (hops(n), n))
        .filter(|&n| hops(n) < hops(here))
}

/// Plays one interleaved round.
pub fn run_round(
    g: &NavGraph,
    swarm: &mut SwarmState,
    counts: &mut VisitCounts,
    params: &SimParams,
) -> Result<RoundRecord, SimError> {
    if swarm.halted || swarm.master_index().is_none() {
        return Err(SimError::NoUavs);
    }
    swarm.round += 1;
    let round = swarm.round;
    let mut events = Vec::new();

    swarm.service_tick(&mut events)?;
    let m = swarm.master_index().expect("checked above");

    // Detached UAVs fall back to plain Node Count on their own snapshot.
    for i in 0..swarm.uavs.len() {
        let uav = &mut swarm.uavs[i];
        if uav.role != Role::Detached {
            continue;
        }
        let local = uav.local_counts.get_or_insert_with(|| counts.clone());
        if let Ok(next) = node_count_step(
            g,
            uav.node,
            local,
            derive_seed(params.seed, round, 1000 + i as u64),
        ) {
            uav.node = next;
            local.record_visit(next);
            local.end_round();
        }
    }

    // (1) the master picks its move
    let here = swarm.uavs[m].node;
    let candidates = if swarm.uavs[m].busy_rounds_remaining > 0 {
        vec![here]
    } else {
        let scripted = match &params.policy {
            MasterPolicy::Waypoints(list) if swarm.waypoint_cursor < list.len() => {
                let to = list[swarm.waypoint_cursor];
                swarm.waypoint_cursor += 1;
                Some(to)
            }
            _ => None,
        };
        match scripted {
            Some(to) if to == here || g.has_edge(here, to) => vec![to],
            Some(to) => return Err(SimError::WaypointNotAdjacent { from: here, to }),
            None => {
                node_count_candidates(g, here, counts, derive_seed(params.seed, round, m as u64))?
            }
        }
    };

    // (2)-(3) hybrid chain to the first candidate that admits one
    let budget = swarm.solver_budget();
    let base = g.base_node();
    let hybrid = HybridCost {
        graph: g,
        counts,
        beta: params.beta,
    };
    let mut solved = None;
    for cand in candidates {
        // Dual ascent only fails when no chain fits the budget, i.e. when
        // the target is too many links away; skip those without solving.
        if g.hops_from_base(cand).is_none_or(|h| h as usize > budget) {
            events.push(EventTag::Vetoed(cand));
            continue;
        }
        match params
            .solver
            .solve(g, base, cand, budget, |a, b| hybrid.cost(a, b))
        {
            Ok(sol) => {
                solved = Some((cand, sol));
                break;
            }
            Err(
                RelayError::Unreachable { .. }
                | RelayError::NoImprovingEdges { .. }
                | RelayError::IterationCap { .. },
            ) => events.push(EventTag::Vetoed(cand)),
            Err(e) => return Err(e.into()),
        }
    }

    // (4) reposition
    let (chain, iterations) = match solved {
        Some((cand, sol)) => {
            let assignment = assign_chain_positions(g, &sol.chain, swarm)?;
            swarm.uavs[m].node = cand;
            for (id, node) in assignment {
                swarm.uavs[id].node = node;
            }
            swarm.master_target = cand;
            swarm.chain = sol.chain;
            (swarm.chain.clone(), sol.history.len())
        }
        // A master stranded beyond the budget (relays left) steps one link
        // towards the base; the record shows the chain it would need there.
        // A busy master holds.
        None if swarm.uavs[m].busy_rounds_remaining == 0
            && g.hops_from_base(here).is_some_and(|h| h as usize > budget) =>
        {
            match retreat_step(g, here) {
                Some(back) => {
                    let needed = g.hops_from_base(back).map_or(1, |h| (h as usize).max(1));
                    let sol = params
                        .solver
                        .solve(g, base, back, needed, |a, b| hybrid.cost(a, b))?;
                    events.push(EventTag::Retreated(back));
                    swarm.uavs[m].node = back;
                    swarm.master_target = back;
                    swarm.chain = sol.chain;
                    (swarm.chain.clone(), sol.history.len())
                }
                None => {
                    events.push(EventTag::Stalled);
                    (swarm.chain.clone(), 0)
                }
            }
        }
        None => {
            events.push(EventTag::Stalled);
            (swarm.chain.clone(), 0)
        }
    };
    let comm_cost: f64 = chain.links().map(|(a, b)| hybrid.comm(a, b)).sum();
    let total_cost: f64 = chain.links().map(|(a, b)| hybrid.cost(a, b)).sum();

    // (5) visits
    let occupied: BTreeSet<NodeId> = swarm
        .uavs
        .iter()
        .filter(|u| u.is_active())
        .map(|u| u.node)
        .collect();
    for &n in &occupied {
        counts.record_visit(n);
    }
    counts.end_round();

    // (6) secondary tasks
    swarm.check_targets(&mut events)?;

    Ok(RoundRecord {
        round,
        chain,
        comm_cost,
        total_cost,
        occupied: occupied.into_iter().collect(),
        events,
        budget,
        dual_ascent_iterations: iterations,
    })
}

/// Owns a swarm, its counts and an event script, and plays rounds.
#[derive(Debug, Clone)]
pub struct Simulation<'g> {
    graph: &'g NavGraph,
    swarm: SwarmState,
    counts: VisitCounts,
    params: SimParams,
    script: BTreeMap<u64, Vec<SwarmEvent>>,
    records: Vec<RoundRecord>,
}

impl<'g> Simulation<'g> {
    pub fn new(
        graph: &'g NavGraph,
        fleet_size: usize,
        targets: &[TargetSpec],
        window: usize,
        params: SimParams,
    ) -> Result<Self, SimError> {
        Ok(Self {
            graph,
            swarm: SwarmState::new(graph, fleet_size, targets)?,
            counts: VisitCounts::windowed(graph.node_count(), window),
            params,
            script: BTreeMap::new(),
            records: Vec::new(),
        })
    }

    /// Schedules `event` before the planning of round `round`.
    pub fn schedule(&mut self, round: u64, event: SwarmEvent) {
        self.script.entry(round).or_default().push(event);
    }

    pub fn swarm(&self) -> &SwarmState {
        &self.swarm
    }

    pub fn counts(&self) -> &VisitCounts {
        &self.counts
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn into_parts(self) -> (SwarmState, VisitCounts, Vec<RoundRecord>) {
        (self.swarm, self.counts, self.records)
    }

    pub fn is_halted(&self) -> bool {
        self.swarm.is_halted()
    }

    /// Plays the next round. Returns `None` once the swarm has halted.
    pub fn step(&mut self) -> Result<Option<&RoundRecord>, SimError> {
        if self.swarm.is_halted() {
            return Ok(None);
        }
        let next = self.swarm.round + 1;
        let mut tags = Vec::new();
        for event in self.script.remove(&next).unwrap_or_default() {
            tags.extend(
                self.swarm
                    .apply_event(self.graph, &mut self.counts, event)?,
            );
        }
        let record = if self.swarm.is_halted() {
            self.swarm.round = next;
            RoundRecord {
                round: next,
                chain: self.swarm.chain.clone(),
                comm_cost: 0.0,
                total_cost: 0.0,
                occupied: Vec::new(),
                events: tags,
                budget: 0,
                dual_ascent_iterations: 0,
            }
        } else {
            let mut record =
                run_round(self.graph, &mut self.swarm, &mut self.counts, &self.params)?;
            tags.append(&mut record.events);
            record.events = tags;
            record
        };
        self.records.push(record);
        Ok(self.records.last())
    }

    /// Plays until `done(counts)` holds, the swarm halts or `max_rounds`
    /// rounds have been played.
    pub fn run_until(
        &mut self,
        max_rounds: u64,
        mut done: impl FnMut(&VisitCounts) -> bool,
    ) -> Result<(), SimError> {
        while self.swarm.round < max_rounds && !done(&self.counts) {
            if self.step()?.is_none() {
                break;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_grid_graph, GridSpec, Position};

    fn grid(w: f64, h: f64, d: f64) -> NavGraph {
        build_grid_graph(&GridSpec::new(w, h, 5.0, Position::new(0.0, 0.0), d, 10.0)).unwrap()
    }

    fn at(g: &NavGraph, c: usize, r: usize) -> NodeId {
        g.node_at(c, r).unwrap()
    }

    #[test]
    fn lone_master_next_to_base() {
        let g = grid(20.0, 20.0, 30.0);
        let mut swarm = SwarmState::new(&g, 1, &[]).unwrap();
        let mut vc = VisitCounts::new(g.node_count());
        let rec = run_round(&g, &mut swarm, &mut vc, &SimParams::new(0.0, 3)).unwrap();
        let m = swarm.master().unwrap().node;
        assert_eq!(rec.chain.nodes(), &[g.base_node(), m]);
        assert_eq!(rec.budget, 1);
        assert_eq!(rec.round, 1);
        assert_eq!(rec.occupied, vec![m]);
    }

    #[test]
    fn two_by_two_with_one_relay_covers_in_eight_rounds() {
        let g = grid(10.0, 10.0, 7.5);
        for seed in 0..25 {
            let mut sim = Simulation::new(&g, 2, &[], 0, SimParams::new(0.5, seed)).unwrap();
            for _ in 0..8 {
                sim.step().unwrap();
            }
            assert!(
                sim.counts().counts().iter().all(|&c| c >= 1),
                "seed {seed}: {:?}",
                sim.counts().counts()
            );
        }
    }

    #[test]
    fn greedy_assignment_prefers_the_nearer_relay() {
        let g = grid(40.0, 5.0, 5.0);
        let mut swarm = SwarmState::new(&g, 3, &[]).unwrap();
        // relays at x = 7.5 (5 m from slot) and x = 27.5 (15 m from slot)
        swarm.uavs[1].node = at(&g, 1, 0);
        swarm.uavs[2].node = at(&g, 5, 0);
        let chain = Chain::new(vec![at(&g, 0, 0), at(&g, 2, 0), at(&g, 3, 0)]);
        let a = assign_chain_positions(&g, &chain, &swarm).unwrap();
        assert_eq!(a.into_iter().collect::<Vec<_>>(), vec![(1, at(&g, 2, 0))]);

        let empty =
            assign_chain_positions(&g, &Chain::new(vec![at(&g, 0, 0), at(&g, 1, 0)]), &swarm)
                .unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn crossing_configuration_takes_the_cheaper_matching() {
        let g = grid(50.0, 5.0, 5.0);
        let mut swarm = SwarmState::new(&g, 3, &[]).unwrap();
        // UAV 1 at col 1, UAV 2 at col 8; slots at cols 6 and 3.
        swarm.uavs[1].node = at(&g, 1, 0);
        swarm.uavs[2].node = at(&g, 8, 0);
        let chain = Chain::new(vec![at(&g, 0, 0), at(&g, 6, 0), at(&g, 3, 0), at(&g, 9, 0)]);
        let a = assign_chain_positions(&g, &chain, &swarm).unwrap();
        // matchings: {1->6, 2->3} = 25 + 25 = 50 m; {1->3, 2->6} = 10 + 10 = 20 m
        assert_eq!(a.get(&1), Some(&at(&g, 3, 0)));
        assert_eq!(a.get(&2), Some(&at(&g, 6, 0)));

        // symmetric tie: both matchings cost the same, lower id picks first
        swarm.uavs[1].node = at(&g, 4, 0);
        swarm.uavs[2].node = at(&g, 5, 0);
        let chain = Chain::new(vec![at(&g, 0, 0), at(&g, 3, 0), at(&g, 6, 0), at(&g, 9, 0)]);
        let a = assign_chain_positions(&g, &chain, &swarm).unwrap();
        assert_eq!(a.get(&1), Some(&at(&g, 3, 0)));
        assert_eq!(a.get(&2), Some(&at(&g, 6, 0)));
    }

    #[test]
    fn too_few_relays_is_an_error() {
        let g = grid(30.0, 5.0, 5.0);
        let swarm = SwarmState::new(&g, 2, &[]).unwrap();
        let chain = Chain::new(vec![at(&g, 0, 0), at(&g, 1, 0), at(&g, 2, 0), at(&g, 3, 0)]);
        assert_eq!(
            assign_chain_positions(&g, &chain, &swarm),
            Err(SimError::InsufficientUavs {
                needed: 2,
                available: 1
            })
        );
    }

    #[test]
    fn promotion_rules() {
        let g = grid(20.0, 20.0, 7.5);
        let mut swarm = SwarmState::new(&g, 3, &[]).unwrap();
        swarm.promote_master(0).unwrap();
        assert_eq!(swarm.master().unwrap().id, 0);
        swarm.uavs[2].node = at(&g, 1, 1);
        swarm.promote_master(2).unwrap();
        assert_eq!(swarm.master().unwrap().id, 2);
        assert_eq!(swarm.uavs[0].role, Role::Chain);
        assert_eq!(swarm.master_target, at(&g, 1, 1));
        assert_eq!(swarm.n_uav_available(), 2);

        swarm.remove_uav(&g, 1).unwrap();
        assert!(matches!(
            swarm.promote_master(1),
            Err(SimError::InvalidRole { .. })
        ));
        swarm.check_invariants(&g).unwrap();
    }

    #[test]
    fn removing_the_master_promotes_the_nearest_relay() {
        let g = grid(30.0, 30.0, 7.5);
        let mut swarm = SwarmState::new(&g, 3, &[]).unwrap();
        swarm.uavs[0].node = at(&g, 4, 4);
        swarm.uavs[1].node = at(&g, 1, 1);
        swarm.uavs[2].node = at(&g, 3, 3);
        let events = swarm.remove_uav(&g, 0).unwrap();
        assert_eq!(
            events,
            vec![EventTag::Removed { uav: 0 }, EventTag::Promoted { uav: 2 }]
        );
        assert_eq!(swarm.master().unwrap().id, 2);
        assert_eq!(swarm.solver_budget(), 2);
        swarm.check_invariants(&g).unwrap();
    }

    #[test]
    fn removing_the_last_uav_halts() {
        let g = grid(20.0, 20.0, 7.5);
        let mut sim = Simulation::new(&g, 1, &[], 0, SimParams::new(0.0, 1)).unwrap();
        sim.schedule(3, SwarmEvent::Remove(0));
        for _ in 0..5 {
            sim.step().unwrap();
        }
        assert!(sim.is_halted());
        let last = sim.records().last().unwrap();
        assert_eq!(last.round, 3);
        assert!(last.is_terminal());
        let mut swarm = sim.swarm().clone();
        let mut vc = sim.counts().clone();
        assert_eq!(
            run_round(&g, &mut swarm, &mut vc, &SimParams::new(0.0, 1)),
            Err(SimError::NoUavs)
        );
    }

    #[test]
    fn detached_uav_merges_by_max_on_return() {
        let g = grid(30.0, 30.0, 7.5);
        let mut sim = Simulation::new(&g, 3, &[], 0, SimParams::new(0.5, 9)).unwrap();
        sim.schedule(2, SwarmEvent::Detach(2));
        sim.schedule(12, SwarmEvent::Reintegrate { uav: 2, node: None });
        for _ in 0..11 {
            sim.step().unwrap();
            sim.swarm().check_invariants(&g).unwrap();
        }
        let swarm_before = sim.counts().clone();
        let local = sim.swarm().uav(2).unwrap().local_counts().unwrap().clone();
        sim.step().unwrap();
        // the merge happens before round 12 records its own visits
        let rec = sim.records().last().unwrap().clone();
        for n in g.nodes() {
            let merged = swarm_before.count(n).max(local.count(n));
            let extra = u64::from(rec.occupied.contains(&n));
            assert_eq!(sim.counts().count(n), merged + extra, "{n}");
        }
        assert_eq!(sim.swarm().uav(2).unwrap().role, Role::Chain);
        assert!(sim.swarm().uav(2).unwrap().local_counts().is_none());
    }

    #[test]
    fn target_makes_the_visitor_master_for_its_service() {
        let g = grid(10.0, 5.0, 5.0);
        let t = TargetSpec {
            node: NodeId(1),
            service_rounds: 3,
        };
        let mut sim = Simulation::new(&g, 2, &[t], 0, SimParams::new(0.0, 0)).unwrap();
        sim.step().unwrap();
        // only neighbor of the base is the target
        let rec = sim.records()[0].clone();
        assert!(rec.events.contains(&EventTag::TaskStarted {
            uav: 0,
            node: NodeId(1)
        }));
        sim.step().unwrap();
        sim.step().unwrap();
        assert_eq!(sim.swarm().master().unwrap().node, NodeId(1));
        sim.step().unwrap();
        let rec = sim.records()[3].clone();
        assert!(rec.events.contains(&EventTag::TaskCompleted {
            uav: 0,
            node: NodeId(1)
        }));
        assert_eq!(sim.swarm().task_status()[0].1, TaskStatus::Done);
    }

    #[test]
    fn scripted_waypoints_must_be_adjacent() {
        let g = grid(20.0, 5.0, 5.0);
        let mut params = SimParams::new(0.0, 0);
        params.policy = MasterPolicy::Waypoints(vec![NodeId(1), NodeId(3)]);
        let mut sim = Simulation::new(&g, 3, &[], 0, params).unwrap();
        sim.step().unwrap();
        assert_eq!(sim.swarm().master().unwrap().node, NodeId(1));
        assert_eq!(
            sim.step().unwrap_err(),
            SimError::WaypointNotAdjacent {
                from: NodeId(1),
                to: NodeId(3)
            }
        );
    }

    #[test]
    fn infeasible_moves_are_vetoed() {
        // line of 4 nodes, 1 UAV: the master can never go beyond node 1.
        let g = grid(20.0, 5.0, 5.0);
        let mut params = SimParams::new(0.0, 0);
        params.policy = MasterPolicy::Waypoints(vec![NodeId(1), NodeId(2)]);
        let mut sim = Simulation::new(&g, 1, &[], 0, params).unwrap();
        sim.step().unwrap();
        let rec = sim.step().unwrap().unwrap().clone();
        assert!(rec.is_stall());
        assert!(rec.events.contains(&EventTag::Vetoed(NodeId(2))));
        assert_eq!(sim.swarm().master().unwrap().node, NodeId(1));
        assert_eq!(rec.chain.nodes(), &[NodeId(0), NodeId(1)]);
    }
}
