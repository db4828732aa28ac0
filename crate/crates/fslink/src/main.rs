use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, RwLock};

use clap::{Args, Parser, Subcommand};
use fslink::config::{Config, QueueOrder};
use fslink::pipeline::{self, Stage, StageContext, StageError};
use fslink::review::{load_queue, QueueColumns, QueueOptions, ReviewState};

#[derive(Parser)]
#[command(name = "fslink", version, about = "Probabilistic record linkage for incident datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and filter both sources; write canonical views and side files.
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full linkage and write merged output and the run report.
    Link {
        #[command(flatten)]
        common: Common,
        /// Posterior cutoff for declaring a match.
        #[arg(long)]
        threshold: Option<f64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Generate seeded synthetic sources and their truth file.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score the last link run against a truth file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Clerical review service.
    Review {
        #[command(subcommand)]
        command: ReviewCommand,
    },
}

#[derive(Subcommand)]
enum ReviewCommand {
    /// Serve the review API (and UI assets, when configured).
    Serve {
        #[command(flatten)]
        common: Common,
        /// Address to bind, e.g. 127.0.0.1:8080 (port 0 picks a free port).
        #[arg(long)]
        bind: Option<String>,
        /// Merged CSV to review (default: <out>/merged.csv).
        #[arg(long)]
        merged: Option<PathBuf>,
        /// Decision log (default: review.log or <out>/decisions.ndjson).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Only enqueue pairs from this state.
        #[arg(long)]
        state: Option<String>,
        /// Random queue order instead of descending posterior.
        #[arg(long)]
        random: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(common: &Common) -> Result<Config, StageError> {
    let mut cfg = Config::load(&common.config).stage(Stage::Config)?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Ingest { common } => {
            let cfg = load(&common)?;
            let s = pipeline::run_ingest(&cfg)?;
            for r in [&s.a, &s.b] {
                println!(
                    "{}: {} rows, {} rejected, {} filtered, {} linkable",
                    r.name, r.rows, r.rejected, r.filtered, r.linkable
                );
            }
        }
        Command::Link {
            common,
            threshold,
            jobs,
        } => {
            let mut cfg = load(&common)?;
            if let Some(t) = threshold {
                cfg.linkage.threshold = t;
                cfg.validate().stage(Stage::Config)?;
            }
            let mut run = pipeline::run_pipeline(&cfg, jobs)?;
            pipeline::write_run(&cfg, &mut run)?;
            let t = &run.report.totals;
            println!(
                "{} blocks, {} candidate pairs, {} declared, {} matches (fdr {:.4}, fnr {:.4}) in {:.2}s -> {}",
                t.blocks,
                t.candidate_pairs,
                t.declared,
                t.matches,
                t.fdr,
                t.fnr,
                run.timings.total,
                cfg.out.display()
            );
        }
        Command::Synth { common, seed } => {
            let cfg = Config::load(&common.config).stage(Stage::Config)?;
            let dir = pipeline::run_synth(&cfg, seed, common.out.as_deref())?;
            println!("wrote a.csv, b.csv, truth.csv to {}", dir.display());
        }
        Command::Evaluate { common, truth } => {
            let cfg = load(&common)?;
            let e = pipeline::run_evaluate(&cfg, truth.as_deref())?;
            let f = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
            println!(
                "probabilistic: precision {} recall {} f1 {}",
                f(e.probabilistic.precision),
                f(e.probabilistic.recall),
                f(e.probabilistic.f1)
            );
            println!(
                "baseline:      precision {} recall {} f1 {}",
                f(e.baseline.precision),
                f(e.baseline.recall),
                f(e.baseline.f1)
            );
        }
        Command::Review {
            command:
                ReviewCommand::Serve {
                    common,
                    bind,
                    merged,
                    log,
                    ui_dir,
                    state,
                    random,
                    seed,
                },
        } => {
            let cfg = load(&common)?;
            let merged = merged.unwrap_or_else(|| cfg.out.join("merged.csv"));
            let log = log.unwrap_or_else(|| cfg.review_log());
            let opts = QueueOptions {
                order: if random { QueueOrder::Random } else { cfg.review.order },
                seed: seed.unwrap_or(cfg.review.seed),
                state: state.or_else(|| cfg.review.state.clone()),
            };
            let items = load_queue(&merged, &QueueColumns::from_config(&cfg), &opts).stage(Stage::Review)?;
            let st = ReviewState::open(items, &log).stage(Stage::Review)?;
            eprintln!("{} pairs queued, {} decided, log {}", st.len(), st.summary().decided, log.display());
            let bind = bind.unwrap_or_else(|| cfg.review.bind.clone());
            let ui_dir = ui_dir.or_else(|| cfg.review.ui_dir.clone());
            let rt = tokio::runtime::Runtime::new().stage(Stage::Review)?;
            rt.block_on(fslink::server::serve(Arc::new(RwLock::new(st)), &bind, ui_dir))
                .stage(Stage::Review)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fslink: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
