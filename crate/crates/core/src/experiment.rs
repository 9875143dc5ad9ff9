//! Batch runner: every (beta, seed) pair of a scenario, per-run artifacts
//! and a per-beta comparison table.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::coverage::VisitCounts;
use crate::graph::NavGraph;
use crate::metrics::{
    write_round_table, write_visit_grid, CoverageGoal, ExperimentSummary, RoundRecord,
};
use crate::sim::{SimError, SimParams, Simulation};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed (beta {beta}, seed {seed}): {source}")]
    Sim {
        beta: f64,
        seed: u64,
        source: SimError,
    },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("writing {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub graph: NavGraph,
    pub records: Vec<RoundRecord>,
    pub counts: VisitCounts,
    pub summary: ExperimentSummary,
}

/// One simulation until k-coverage, halt or `max_rounds`.
pub fn run_single(
    config: &ScenarioConfig,
    beta: f64,
    seed: u64,
) -> Result<RunOutput, ExperimentError> {
    let graph = config.build_graph(seed)?;
    let targets = config.targets(&graph)?;
    let goal = CoverageGoal::within_hops(&graph, config.fleet.size);
    let k = config.run.k;
    let sim_err = |source| ExperimentError::Sim { beta, seed, source };

    let (records, counts) = {
        let mut sim = Simulation::new(
            &graph,
            config.fleet.size,
            &targets,
            config.run.window,
            SimParams::new(beta, seed),
        )
        .map_err(sim_err)?;
        for (round, event) in config.events(&graph) {
            sim.schedule(round, event);
        }
        sim.run_until(config.run.max_rounds, |c| {
            goal.is_met(c.cumulative_counts(), k)
        })
        .map_err(sim_err)?;
        let (_, counts, records) = sim.into_parts();
        (records, counts)
    };
    let summary = ExperimentSummary::from_run(&records, &counts, &goal, k, beta, seed);
    info!(
        "beta={beta} seed={seed}: {} rounds, coverage at {:?}, max visits {}",
        summary.rounds, summary.iterations_to_k, summary.visits.max
    );
    Ok(RunOutput {
        graph,
        records,
        counts,
        summary,
    })
}

/// Per-beta medians across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaComparison {
    pub beta: f64,
    pub runs: usize,
    pub covered_runs: usize,
    /// Runs that never reached coverage count as infinitely long.
    pub median_iterations: f64,
    pub median_visit_max: f64,
    pub median_visit_mean: f64,
    pub median_comm_mean: f64,
    pub median_comm_max: f64,
}

pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Groups summaries by beta, in first-seen order.
pub fn compare_by_beta(summaries: &[ExperimentSummary]) -> Vec<BetaComparison> {
    let mut betas: Vec<f64> = Vec::new();
    for s in summaries {
        if !betas.iter().any(|b| b.to_bits() == s.beta.to_bits()) {
            betas.push(s.beta);
        }
    }
    betas
        .into_iter()
        .map(|beta| {
            let group: Vec<_> = summaries
                .iter()
                .filter(|s| s.beta.to_bits() == beta.to_bits())
                .collect();
            BetaComparison {
                beta,
                runs: group.len(),
                covered_runs: group.iter().filter(|s| s.iterations_to_k.is_some()).count(),
                median_iterations: median(
                    group
                        .iter()
                        .map(|s| s.iterations_to_k.map_or(f64::INFINITY, |i| i as f64)),
                ),
                median_visit_max: median(group.iter().map(|s| s.visits.max)),
                median_visit_mean: median(group.iter().map(|s| s.visits.mean)),
                median_comm_mean: median(group.iter().map(|s| s.comm.mean)),
                median_comm_max: median(group.iter().map(|s| s.comm.max)),
            }
        })
        .collect()
}

pub fn write_comparison<W: Write>(w: W, rows: &[BetaComparison]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "beta",
        "runs",
        "covered_runs",
        "median_iterations",
        "median_visit_max",
        "median_visit_mean",
        "median_comm_mean",
        "median_comm_max",
    ])?;
    for r in rows {
        let iters = if r.median_iterations.is_finite() {
            format!("{:.1}", r.median_iterations)
        } else {
            "NONE".into()
        };
        out.write_record([
            r.beta.to_string(),
            r.runs.to_string(),
            r.covered_runs.to_string(),
            iters,
            format!("{:.6}", r.median_visit_max),
            format!("{:.6}", r.median_visit_mean),
            format!("{:.6}", r.median_comm_mean),
            format!("{:.6}", r.median_comm_max),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| ExperimentError::Io {
            path: path.to_owned(),
            source,
        })
}

fn run_dir_name(beta: f64, seed: u64) -> String {
    format!("beta-{beta}_seed-{seed}")
}

fn write_run(dir: &Path, run: &RunOutput) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let csv_err = |path: PathBuf| move |source| ExperimentError::Csv { path, source };

    let path = dir.join("visits.csv");
    write_visit_grid(create(&path)?, &run.graph, &run.counts).map_err(csv_err(path))?;
    let path = dir.join("rounds.csv");
    write_round_table(create(&path)?, &run.records).map_err(csv_err(path))?;
    let path = dir.join("summary.txt");
    let mut w = create(&path)?;
    run.summary
        .write_text(&mut w)
        .and_then(|_| w.flush())
        .map_err(|source| ExperimentError::Io { path, source })?;
    Ok(())
}

/// Runs every (beta, seed) pair. When `out_dir` is given, writes
/// `beta-<b>_seed-<s>/{visits.csv,rounds.csv,summary.txt}` per run and
/// `comparison.csv` at the top.
pub fn run_experiment(
    config: &ScenarioConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<ExperimentSummary>, ExperimentError> {
    config.validate()?;
    let pairs: Vec<(f64, u64)> = config
        .run
        .betas
        .iter()
        .flat_map(|&b| config.run.seeds.iter().map(move |&s| (b, s)))
        .collect();
    let runs: Vec<RunOutput> = pairs
        .par_iter()
        .map(|&(beta, seed)| run_single(config, beta, seed))
        .collect::<Result<_, _>>()?;

    let summaries: Vec<ExperimentSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    if let Some(out) = out_dir {
        for run in &runs {
            write_run(
                &out.join(run_dir_name(run.summary.beta, run.summary.seed)),
                run,
            )?;
        }
        let path = out.join("comparison.csv");
        write_comparison(create(&path)?, &compare_by_beta(&summaries))
            .map_err(|source| ExperimentError::Csv { path, source })?;
    }
    Ok(summaries)
}
