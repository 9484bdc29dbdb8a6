//! Command-line driver for the active-learning benchmark harness.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use ocal::config::{expand_grid, parse_grid, PreparedGrid};
use ocal::harness::{
    aggregate, emit_curves, run_grid, write_results, CellStatus, GroupStat,
};
use ocal::kernel::GammaHeuristic;
use ocal::learners::Learner;
use ocal::metrics::SummaryStat;
use ocal::strategies::StrategyKind;

#[derive(Parser)]
#[command(
    name = "ocal",
    about = "Active learning for outlier detection with one-class classifiers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every feasible cell of an experiment grid.
    Run {
        /// Grid config file (TOML).
        config: PathBuf,
        /// Results directory.
        #[arg(short, long, default_value = "results")]
        out: PathBuf,
        /// Worker threads; 0 uses all cores. Overridden by OCAL_WORKERS.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Persist per-iteration model audit records.
        #[arg(long)]
        audit: bool,
    },
    /// Report which grid cells are feasible without running anything.
    Validate {
        /// Grid config file (TOML).
        config: PathBuf,
    },
    /// Aggregate stored results into a grouped summary table.
    Summarize {
        /// Results directory written by `run`.
        results: PathBuf,
        /// Comma-separated config fields to group by.
        #[arg(long, default_value = "strategy")]
        group_by: String,
        /// Aggregation statistic: median or mean.
        #[arg(long, default_value = "median")]
        stat: String,
        /// Comma-separated summary statistics.
        #[arg(long, default_value = "sq,ru:5,qr,aeq:5,ls:5,roq")]
        summary: String,
        /// Quality metric the summaries are computed on.
        #[arg(long, default_value = "mcc")]
        metric: String,
        /// Also write the table as CSV to this path.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Emit plot-ready per-iteration curve tables and a summary CSV.
    Curves {
        /// Results directory written by `run`.
        results: PathBuf,
        /// Output directory for the CSV files.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// List the query strategies.
    ListStrategies,
    /// List the base learners.
    ListLearners,
}

fn load_grid(config: &PathBuf) -> anyhow::Result<PreparedGrid> {
    let content = std::fs::read_to_string(config)
        .with_context(|| format!("reading {}", config.display()))?;
    let spec = parse_grid(&content).context("parsing grid config")?;
    let base = config
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    expand_grid(&spec, &base).context("expanding grid").map_err(Into::into)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
            audit,
        } => {
            let grid = load_grid(&config)?;
            let workers = std::env::var("OCAL_WORKERS")
                .ok()
                .and_then(|w| w.parse().ok())
                .unwrap_or(workers);
            eprintln!(
                "{} cells to run, {} infeasible",
                grid.cells.len(),
                grid.excluded.len()
            );
            for (cfg, reason) in &grid.excluded {
                eprintln!(
                    "  skip {} {} {} {} {} seed={}: {reason}",
                    cfg.dataset_name,
                    cfg.pool.name(),
                    cfg.split.name(),
                    cfg.learner.name(),
                    cfg.strategy.name(),
                    cfg.seed
                );
            }
            let done = AtomicUsize::new(0);
            let total = grid.cells.len();
            let outcomes = run_grid(&grid, workers, audit, |outcome| {
                let i = done.fetch_add(1, Ordering::Relaxed) + 1;
                let status = match &outcome.status {
                    CellStatus::Ok => "ok".to_string(),
                    CellStatus::Failed { error } => format!("FAILED: {error}"),
                    CellStatus::Infeasible { reason } => format!("infeasible: {reason}"),
                };
                eprintln!(
                    "[{i}/{total}] {} {} {} {} seed={} -> {status}",
                    outcome.config.dataset_name,
                    outcome.config.split.name(),
                    outcome.config.learner.name(),
                    outcome.config.strategy.name(),
                    outcome.config.seed,
                );
            });
            write_results(&out, &outcomes)?;
            let failed = outcomes.iter().filter(|o| o.is_failed()).count();
            eprintln!(
                "wrote {} cells to {} ({failed} failed)",
                outcomes.len(),
                out.display()
            );
            if failed > 0 {
                bail!("{failed} cells failed");
            }
            Ok(())
        }
        Command::Validate { config } => {
            let grid = load_grid(&config)?;
            for cfg in &grid.cells {
                println!(
                    "ok          {} {} {} {} {} {} seed={}",
                    cfg.dataset_name,
                    cfg.pool.name(),
                    cfg.split.name(),
                    cfg.learner.name(),
                    cfg.gamma.name(),
                    cfg.strategy.name(),
                    cfg.seed
                );
            }
            for (cfg, reason) in &grid.excluded {
                println!(
                    "infeasible  {} {} {} {} {} {} seed={}: {reason}",
                    cfg.dataset_name,
                    cfg.pool.name(),
                    cfg.split.name(),
                    cfg.learner.name(),
                    cfg.gamma.name(),
                    cfg.strategy.name(),
                    cfg.seed
                );
            }
            println!(
                "{} feasible, {} infeasible",
                grid.cells.len(),
                grid.excluded.len()
            );
            Ok(())
        }
        Command::Summarize {
            results,
            group_by,
            stat,
            summary,
            metric,
            out,
        } => {
            let group_by: Vec<String> = group_by.split(',').map(str::to_string).collect();
            let stat: GroupStat = stat.parse()?;
            let summaries: Vec<SummaryStat> = summary
                .split(',')
                .map(|s| s.parse())
                .collect::<Result<_, _>>()?;
            let table = aggregate(&results, &group_by, stat, &metric, &summaries)?;
            print!("{}", table.render_text());
            if let Some(path) = out {
                std::fs::write(&path, table.to_csv())?;
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Curves { results, out } => {
            let written = emit_curves(&results, &out)?;
            eprintln!("wrote {} files to {}", written.len(), out.display());
            Ok(())
        }
        Command::ListStrategies => {
            for kind in StrategyKind::all() {
                let class = match kind {
                    StrategyKind::Mm | StrategyKind::Emm | StrategyKind::Eme | StrategyKind::Ml => {
                        "data-based"
                    }
                    StrategyKind::Hc | StrategyKind::Db => "model-based",
                    StrategyKind::Nb | StrategyKind::Bnc => "hybrid",
                    _ => "baseline",
                };
                println!("{:<10} {class}", kind.name());
            }
            Ok(())
        }
        Command::ListLearners => {
            for learner in [Learner::Svdd, Learner::SvddNeg, Learner::Ssad] {
                let note = match learner {
                    Learner::Svdd => "unsupervised ball; si split only",
                    Learner::SvddNeg => "labeled outliers constrained outside",
                    Learner::Ssad => "labeled margin, trade-off kappa",
                };
                println!("{:<8} {note}", learner.name());
            }
            for heuristic in [GammaHeuristic::Scott, GammaHeuristic::Wang] {
                let note = match heuristic {
                    GammaHeuristic::Scott => "bandwidth rule of thumb",
                    _ => "reserved, not implemented",
                };
                println!("gamma {:<6} {note}", heuristic.name());
            }
            Ok(())
        }
    }
}
