use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cavity_array_cli::config::{Preset, RunConfig, Task};
use cavity_array_cli::plot::{emit_plot_data, Figure};
use cavity_array_cli::tasks::run_task;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cavity-array", version, about = "Ground-state phase diagram of a coupled cavity array")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Energies and run log at single points.
    Point(RunArgs),
    /// Charge gaps, 1/L extrapolations and the MI boundary.
    ChargeGapCut(RunArgs),
    /// Neutral gaps over a coupling scan.
    NeutralGapCut(RunArgs),
    /// Density-wave correlator profiles and densities.
    DwCurve(RunArgs),
    /// Density-wave midpoint scaling, classification and boundary.
    DwScan(RunArgs),
    /// Phase labels over a (t, g2) grid.
    PhaseGrid(RunArgs),
    /// DMRG against exact diagonalization on small chains.
    EdCheck(RunArgs),
    /// Plot-ready columns and gnuplot scripts from a result directory.
    Plot {
        /// Directory holding the task tables.
        dir: PathBuf,
        #[arg(long, value_enum)]
        figure: Figure,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON file merged over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Coupling list; replaces any grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    g2: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    t: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta: Option<Vec<f64>>,
    /// Kept states; several values run a convergence study.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    /// Recompute every job instead of reusing cached results.
    #[arg(long)]
    fresh: bool,
}

impl RunArgs {
    fn resolve(self, task: Task) -> Result<(RunConfig, bool)> {
        let mut cfg = RunConfig::preset(task, self.preset);
        if let Some(path) = &self.config {
            cfg = cfg.merge_file(path)?;
        }
        cfg.task = Some(task);
        if let Some(v) = self.out {
            cfg.out = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.sizes {
            cfg.sizes = v;
        }
        if let Some(v) = self.g2 {
            cfg.g2 = v;
            cfg.g2_grid = None;
        }
        if let Some(v) = self.t {
            cfg.t = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(mut v) = self.m {
            if v.len() == 1 {
                cfg.dmrg.m = v[0];
                v.clear();
            }
            cfg.m = v;
        }
        Ok((cfg, self.fresh))
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (task, args) = match cli.command {
        Command::Plot { dir, figure } => {
            for path in emit_plot_data(&dir, figure)? {
                println!("{}", path.display());
            }
            return Ok(true);
        }
        Command::Point(a) => (Task::Point, a),
        Command::ChargeGapCut(a) => (Task::ChargeGapCut, a),
        Command::NeutralGapCut(a) => (Task::NeutralGapCut, a),
        Command::DwCurve(a) => (Task::DwCurve, a),
        Command::DwScan(a) => (Task::DwScan, a),
        Command::PhaseGrid(a) => (Task::PhaseGrid, a),
        Command::EdCheck(a) => (Task::EdCheck, a),
    };
    let (cfg, fresh) = args.resolve(task)?;
    cfg.validate().context("invalid configuration")?;
    let summary = run_task(&cfg, fresh)?;
    for (job, err) in &summary.failures.0 {
        eprintln!("failed: {job}: {err}");
    }
    println!(
        "{}: {} jobs, {} failures, results in {}",
        task.as_str(),
        summary.jobs,
        summary.failures.0.len(),
        cfg.out.display()
    );
    Ok(summary.failures.0.is_empty())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
