use proptest::prelude::*;
use relaycov::graph::{build_grid_graph, GridSpec, NavGraph, Position};
use relaycov::metrics::{
    iterations_to_k_coverage, write_round_table, write_visit_grid, CoverageGoal, ExperimentSummary,
};
use relaycov::sim::{SimParams, Simulation};

fn map() -> NavGraph {
    build_grid_graph(&GridSpec::new(
        30.0,
        30.0,
        5.0,
        Position::new(0.0, 0.0),
        10.0,
        3.0,
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn replayed_coverage_matches_the_live_run(seed in any::<u64>(), beta in 0.0f64..2.0, k in 1u64..4) {
        let g = map();
        let goal = CoverageGoal::within_hops(&g, 4);
        let mut sim = Simulation::new(&g, 4, &[], 0, SimParams::new(beta, seed)).unwrap();
        let mut live = None;
        while sim.swarm().round < 2000 {
            sim.step().unwrap();
            if goal.is_met(sim.counts().cumulative_counts(), k) {
                live = Some(sim.swarm().round);
                break;
            }
        }
        let records = sim.records();
        prop_assert_eq!(iterations_to_k_coverage(records, &goal, k), live);
        // Pure function of its inputs.
        prop_assert_eq!(iterations_to_k_coverage(records, &goal, k), live);
    }

    #[test]
    fn visits_are_conserved(seed in any::<u64>(), rounds in 1u64..120) {
        let g = map();
        let mut sim = Simulation::new(&g, 4, &[], 0, SimParams::new(0.5, seed)).unwrap();
        sim.run_until(rounds, |_| false).unwrap();
        let occupied: usize = sim.records().iter().map(|r| r.occupied.len()).sum();
        prop_assert_eq!(sim.counts().total_visits(), occupied as u64);

        let mut grid = Vec::new();
        write_visit_grid(&mut grid, &g, sim.counts()).unwrap();
        let text = String::from_utf8(grid).unwrap();
        let mut lines = text.lines();
        let header = format!("{},{}", g.rows(), g.cols());
        prop_assert_eq!(lines.next(), Some(header.as_str()));
        let cells: Vec<u64> = lines.flat_map(|l| l.split(',').map(|c| c.parse::<u64>().unwrap()).collect::<Vec<_>>()).collect();
        prop_assert_eq!(cells.len(), g.rows() * g.cols());
        prop_assert_eq!(cells.iter().sum::<u64>(), occupied as u64);

        let mut table = Vec::new();
        write_round_table(&mut table, sim.records()).unwrap();
        prop_assert_eq!(String::from_utf8(table).unwrap().lines().count(), sim.records().len() + 1);
    }
}

#[test]
fn summary_reports_bounds_in_order() {
    let g = map();
    let goal = CoverageGoal::within_hops(&g, 4);
    let mut sim = Simulation::new(&g, 4, &[], 0, SimParams::new(1.0, 5)).unwrap();
    sim.run_until(300, |c| goal.is_met(c.cumulative_counts(), 2))
        .unwrap();
    let s = ExperimentSummary::from_run(sim.records(), sim.counts(), &goal, 2, 1.0, 5);
    assert!(s.iterations_to_k.is_some());
    assert!(s.visits.min >= 2.0 && s.visits.min <= s.visits.mean && s.visits.mean <= s.visits.max);
    assert!(s.comm.min <= s.comm.mean && s.comm.mean <= s.comm.max);
    assert!(!s.peak_nodes.is_empty());
    let mut text = Vec::new();
    s.write_text(&mut text).unwrap();
    assert!(String::from_utf8(text)
        .unwrap()
        .contains("iterations_to_k="));
}
