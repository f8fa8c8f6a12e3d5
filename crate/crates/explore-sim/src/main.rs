use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use explore_sim::instance::{load_instance, solve_report};
use explore_sim::scenario::{build_world, Mode, ScenarioConfig};
use explore_sim::trace::{parse_trace, render_trace};
use explore_sim::{ablate, run_world};

/// Deterministic multi-agent exploration runs and analysis tools.
#[derive(Parser)]
#[command(name = "explore-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write metrics, summary, trace, and map dumps.
    Run {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's seed (regenerates generated maps).
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's mode: full, no-con, no-graph, or greedy.
        #[arg(long)]
        mode: Option<Mode>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a sweep matrix and write per-run rows plus a summary table.
    Ablate {
        /// Matrix TOML file.
        #[arg(long)]
        matrix: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one allocation instance file and print the result.
    SolveInstance { file: PathBuf },
    /// Decode a binary run trace and print it as text.
    Replay { trace: PathBuf },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { scenario, seed, mode, out } => {
            let mut cfg = ScenarioConfig::load(&scenario)
                .with_context(|| format!("loading scenario {}", scenario.display()))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(mode) = mode {
                cfg.mode = mode;
            }
            let world = build_world(cfg)?;
            let metrics = run_world(world, Some(&out))
                .with_context(|| format!("writing outputs to {}", out.display()))?;
            println!(
                "{} mode={} seed={}: {} ticks ({:.1} s simulated), coverage {:.3}, \
                 path {:.1} m, {} rounds, {}",
                metrics.scenario,
                metrics.mode.as_str(),
                metrics.seed,
                metrics.ticks,
                metrics.exploration_time_s,
                metrics.coverage_final,
                metrics.total_path_m,
                metrics.allocation_rounds,
                if metrics.complete { "complete" } else { "INCOMPLETE (tick cap)" },
            );
            println!("wrote {}", out.display());
        }
        Cmd::Ablate { matrix, out } => {
            let summary = ablate::ablate_to_dir(&matrix, &out)?;
            print!("{summary}");
            println!("wrote {}", out.display());
        }
        Cmd::SolveInstance { file } => {
            let (problem, seed) = load_instance(&file)
                .with_context(|| format!("loading instance {}", file.display()))?;
            let (_, report) = solve_report(&problem, seed);
            print!("{report}");
        }
        Cmd::Replay { trace } => {
            let bytes = std::fs::read(&trace)
                .with_context(|| format!("reading trace {}", trace.display()))?;
            let records = parse_trace(&bytes)?;
            print!("{}", render_trace(&records));
        }
    }
    Ok(())
}
