use proptest::prelude::*;
use relaycov::coverage::VisitCounts;
use relaycov::graph::{build_grid_graph, Digraph, GridSpec, NavGraph, NodeId, Position, Rect};
use relaycov::metrics::{CoverageGoal, EventTag};
use relaycov::sim::{
    run_round, Role, SimError, SimParams, Simulation, SwarmEvent, SwarmState, TargetSpec,
};

const FLEET: usize = 4;

fn map() -> NavGraph {
    let spec =
        GridSpec::new(40.0, 40.0, 5.0, Position::new(0.0, 0.0), 10.0, 5.0).with_obstacles(vec![
            Rect::from_corners(Position::new(15.0, 15.0), Position::new(25.0, 22.0)),
        ]);
    build_grid_graph(&spec).unwrap()
}

fn event() -> impl Strategy<Value = (u64, SwarmEvent)> {
    let uav = 0..FLEET + 1;
    (
        1u64..80,
        prop_oneof![
            uav.clone().prop_map(SwarmEvent::Remove),
            uav.clone().prop_map(SwarmEvent::Detach),
            (uav, prop::option::of(0usize..64)).prop_map(|(uav, node)| SwarmEvent::Reintegrate {
                uav,
                node: node.map(NodeId::from)
            }),
        ],
    )
}

/// Errors a script can legitimately trigger by naming the wrong UAV or node.
fn is_rejection(e: &SimError) -> bool {
    matches!(
        e,
        SimError::UnknownUav(_) | SimError::InvalidRole { .. } | SimError::InvalidNode(_)
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn membership_changes_keep_the_swarm_consistent(
        mut script in prop::collection::vec(event(), 0..12),
        beta in prop_oneof![Just(0.0), Just(0.5), Just(2.0)],
        seed in any::<u64>(),
    ) {
        let g = map();
        script.sort_by_key(|e| e.0);
        let mut swarm = SwarmState::new(&g, FLEET, &[]).unwrap();
        let mut counts = VisitCounts::new(g.node_count());
        let params = SimParams::new(beta, seed);
        let mut pending = script.iter().peekable();
        let mut retreat_rounds = 0;
        for round in 1..=80u64 {
            while let Some(&(_, e)) = pending.next_if(|(r, _)| *r == round) {
                let before = swarm.clone();
                match swarm.apply_event(&g, &mut counts, e) {
                    Ok(_) => {}
                    Err(err) if is_rejection(&err) => prop_assert_eq!(&swarm, &before, "rejected {:?} changed the swarm", e),
                    Err(err) => return Err(TestCaseError::fail(format!("{e:?}: {err}"))),
                }
                swarm.check_invariants(&g).map_err(TestCaseError::fail)?;
            }
            if swarm.is_halted() {
                prop_assert_eq!(swarm.count_role(Role::Master), 0);
                continue;
            }
            let record = run_round(&g, &mut swarm, &mut counts, &params).map_err(|e| TestCaseError::fail(e.to_string()))?;
            swarm.check_invariants(&g).map_err(TestCaseError::fail)?;
            prop_assert_eq!(swarm.count_role(Role::Master), 1);
            prop_assert!(record.chain.validate(&g).is_ok());
            prop_assert_eq!(record.chain.base(), g.base_node());
            // A chain may outgrow the budget only when relays leave; the
            // master then walks back until one fits again.
            let stranded = record.events.iter().any(|e| matches!(e, EventTag::Retreated(_) | EventTag::Stalled));
            prop_assert!(stranded || record.chain.node_count() <= record.budget + 1);
            if stranded {
                retreat_rounds += 1;
                prop_assert!(retreat_rounds <= FLEET, "stranded for {} rounds", retreat_rounds);
            } else {
                retreat_rounds = 0;
            }
            prop_assert_eq!(record.budget, swarm.n_uav_available() + 1);
            prop_assert!(record.occupied.windows(2).all(|w| w[0] < w[1]));
            let master = swarm.master().unwrap();
            prop_assert!(record.occupied.contains(&master.node));
            prop_assert_eq!(record.chain.target(), master.node);
        }
    }

    #[test]
    fn runs_are_reproducible(seed in any::<u64>(), beta in 0.0f64..2.0) {
        let g = map();
        let play = || {
            let mut sim = Simulation::new(&g, FLEET, &[], 0, SimParams::new(beta, seed)).unwrap();
            sim.schedule(10, SwarmEvent::Detach(1));
            sim.schedule(25, SwarmEvent::Reintegrate { uav: 1, node: None });
            sim.run_until(60, |_| false).unwrap();
            sim.into_parts()
        };
        prop_assert_eq!(play(), play());
    }

    #[test]
    fn master_moves_one_link_per_round(seed in any::<u64>()) {
        let g = map();
        let mut sim = Simulation::new(&g, FLEET, &[], 0, SimParams::new(0.5, seed)).unwrap();
        let mut prev = sim.swarm().master().unwrap().node;
        for _ in 0..60 {
            sim.step().unwrap();
            let now = sim.swarm().master().unwrap().node;
            prop_assert!(now == prev || g.has_edge(prev, now), "{prev} -> {now}");
            prev = now;
        }
    }
}

#[test]
fn removing_every_uav_halts_the_swarm() {
    let g = map();
    let mut sim = Simulation::new(&g, 2, &[], 0, SimParams::new(0.0, 1)).unwrap();
    sim.schedule(3, SwarmEvent::Remove(0));
    sim.schedule(3, SwarmEvent::Remove(1));
    sim.run_until(10, |_| false).unwrap();
    assert!(sim.is_halted());
    assert_eq!(sim.swarm().count_role(Role::Departed), 2);
}

#[test]
fn every_reachable_node_is_eventually_visited() {
    let g = map();
    let goal = CoverageGoal::within_hops(&g, FLEET);
    let mut sim = Simulation::new(&g, FLEET, &[], 0, SimParams::new(0.5, 3)).unwrap();
    sim.run_until(3000, |c| goal.is_met(c.cumulative_counts(), 1))
        .unwrap();
    assert!(
        goal.is_met(sim.counts().cumulative_counts(), 1),
        "not covered after {} rounds",
        sim.swarm().round
    );
}

#[test]
fn a_target_keeps_the_master_in_place_for_its_service_time() {
    let g = map();
    let spot = g.node_at(1, 0).unwrap();
    let mut sim = Simulation::new(
        &g,
        FLEET,
        &[TargetSpec {
            node: spot,
            service_rounds: 5,
        }],
        0,
        SimParams::new(0.0, 9),
    )
    .unwrap();
    let mut held = 0;
    for _ in 0..400 {
        sim.step().unwrap();
        let m = sim.swarm().master().unwrap();
        if m.busy_rounds_remaining > 0 {
            assert_eq!(m.node, spot);
            held += 1;
        }
    }
    assert!(held >= 4, "master held the target for {held} rounds");
}
