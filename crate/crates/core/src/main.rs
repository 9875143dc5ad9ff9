use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;

use relaycov::config::ScenarioConfig;
use relaycov::experiment::{compare_by_beta, run_experiment};

/// Run hybrid relay-coverage experiments described by a scenario file.
#[derive(Debug, Parser)]
#[command(name = "relaycov", version)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(short, long)]
    config: PathBuf,

    /// Output directory for CSV artifacts.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,

    /// Replace the scenario's seed list (repeatable).
    #[arg(long = "seed")]
    seeds: Vec<u64>,

    /// Replace the scenario's beta list (repeatable).
    #[arg(long = "beta")]
    betas: Vec<f64>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    let mut config = match ScenarioConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if !cli.seeds.is_empty() {
        config.run.seeds = cli.seeds;
    }
    if !cli.betas.is_empty() {
        config.run.betas = cli.betas;
    }
    if let Err(e) = config.validate() {
        eprintln!("config error: {e}");
        return ExitCode::from(2);
    }

    match run_experiment(&config, Some(&cli.out)) {
        Ok(summaries) => {
            println!(
                "{:>6} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10}",
                "beta", "runs", "iters", "visit_max", "visit_avg", "comm_avg", "comm_max"
            );
            for row in compare_by_beta(&summaries) {
                println!(
                    "{:>6} {:>5} {:>10.1} {:>10.1} {:>10.2} {:>10.2} {:>10.2}",
                    row.beta,
                    row.runs,
                    row.median_iterations,
                    row.median_visit_max,
                    row.median_visit_mean,
                    row.median_comm_mean,
                    row.median_comm_max
                );
            }
            println!("artifacts written to {}", cli.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
