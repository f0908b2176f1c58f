use std::path::PathBuf;

use anchorlab::Strategy;
use anchorlab_cli::analysis::{anchors_analyze, compare, transfer, write_csv};
use anchorlab_cli::config::parse_seeds;
use anchorlab_cli::sweep::{execute, thread_count};
use anchorlab_cli::{ExperimentConfig, Overrides, ResultStore};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "anchorlab", version, about = "Anchor-selection GNN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one dataset with one strategy over the configured seeds.
    Run(ConfigArgs),
    /// Train every dataset × strategy × seed; skips runs already recorded.
    Sweep(ConfigArgs),
    /// Paired Wilcoxon test of two strategies' test AUCs.
    Compare {
        /// Results directory or a results.csv file.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Rank correlation of learned anchor frequency with each centrality.
    AnchorsAnalyze {
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Trailing epochs averaged into the selection frequency.
        #[arg(long, default_value_t = 50)]
        window: usize,
    },
    /// Evaluate recorded checkpoints on every target graph.
    Transfer(ConfigArgs),
}

// An alias so clap parses one value instead of collecting repeated flags.
type SeedList = Vec<u64>;

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `3`, `0,1,5` or `0..8`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k_const: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            out: self.out.clone(),
            seeds: self.seeds.clone(),
            strategy: self.strategy,
            alpha: self.alpha,
            k_const: self.k_const,
            epochs: self.epochs,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = args.load()?;
            if cfg.datasets.len() != 1 || cfg.strategies.len() != 1 {
                bail!(
                    "run takes one dataset and one strategy (got {} and {}); use sweep or --strategy",
                    cfg.datasets.len(),
                    cfg.strategies.len()
                );
            }
            sweep(&cfg)
        }
        Command::Sweep(args) => sweep(&args.load()?),
        Command::Compare { out, a, b } => {
            let results = if out.is_dir() { out.join(anchorlab_cli::store::RESULTS_FILE) } else { out };
            let c = compare(&results, &a, &b)?;
            if c.report.degenerate {
                eprintln!("all paired differences are zero; p = 1");
            } else if c.report.small_sample {
                eprintln!("warning: only {} non-zero differences", c.report.n);
            }
            println!("{}", serde_json::to_string_pretty(&c)?);
            Ok(())
        }
        Command::AnchorsAnalyze { out, window } => {
            let store = ResultStore::open(&out)?;
            let rows = anchors_analyze(&store, window)?;
            if rows.is_empty() {
                bail!("no learned-anchor runs in {}", store.results_path().display());
            }
            let path = out.join("anchors_analysis.csv");
            write_csv(&path, &rows)?;
            println!("{} correlations written to {}", rows.len(), path.display());
            Ok(())
        }
        Command::Transfer(args) => {
            let cfg = args.load()?;
            let store = ResultStore::open(&cfg.out)?;
            let cells = transfer(&cfg, &store)?;
            let path = cfg.out.join("transfer.csv");
            write_csv(&path, &cells)?;
            for c in &cells {
                match c.test_auc {
                    Some(auc) => println!("{} -> {} {} seed {}: {auc:.4}", c.source, c.target, c.strategy, c.seed),
                    None => println!("{} -> {} {} seed {}: {}", c.source, c.target, c.strategy, c.seed, c.note),
                }
            }
            Ok(())
        }
    }
}

fn sweep(cfg: &ExperimentConfig) -> Result<()> {
    let store = ResultStore::open(&cfg.out)?;
    let threads = thread_count()?;
    let s = execute(&cfg.jobs(), &store, threads).context("sweep")?;
    println!(
        "{} runs: {} trained, {} already present -> {}",
        s.total,
        s.ran,
        s.skipped,
        store.results_path().display()
    );
    Ok(())
}
