use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use drillmae::dse::analysis::rank_and_compare;
use drillmae::ingest::validation_report;
use drillmae::mae::MaeConfig;
use drillmae::manifest::{parse_override, Manifest};
use drillmae::nn::CellKind;
use drillmae::workflow;

#[derive(Parser)]
#[command(name = "drillmae", version, about = "Masked-autoencoder pretraining for drilling telemetry")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Experiment manifest (`key = value` lines).
    #[arg(short, long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any manifest key, e.g. `--set window.len=120`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Verb {
    /// Load wells and print a validation report.
    Ingest {
        #[arg(long, requires = "file")]
        well: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        /// Comma-separated input channel names.
        #[arg(long, value_delimiter = ',')]
        channels: Vec<String>,
        #[arg(long)]
        target: Option<String>,
    },
    /// Extract drilling segments.
    Segment,
    /// Build and split windows.
    Windows,
    /// Train the supervised baselines.
    Baseline {
        #[arg(long)]
        cell: Option<CellKind>,
    },
    /// Stage 1 for one configuration.
    Pretrain {
        #[arg(long)]
        config: MaeConfig,
    },
    /// Stage 2 for one pretrained configuration.
    Finetune {
        #[arg(long)]
        config: MaeConfig,
    },
    /// Run the design-space search.
    Dse {
        #[arg(long)]
        no_snapshots: bool,
    },
    /// Regenerate report files from a ledger.
    Report {
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long)]
        to: Option<PathBuf>,
    },
}

impl Common {
    fn load(&self) -> Result<Manifest> {
        let path = self.manifest.as_ref().context("this verb needs --manifest")?;
        let mut overrides = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<drillmae::Result<Vec<_>>>()?;
        if let Some(s) = self.seed {
            overrides.push(("seed".into(), s.to_string()));
        }
        if let Some(w) = self.workers {
            overrides.push(("workers".into(), w.to_string()));
        }
        let mut m = Manifest::load_with(path, &overrides)
            .with_context(|| format!("loading manifest {}", path.display()))?;
        if let Some(out) = &self.out {
            m.out = out.clone();
        }
        Ok(m)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.verb {
        Verb::Ingest {
            well,
            file,
            channels,
            target,
        } => match (well, file) {
            (Some(well), Some(file)) => {
                let target = target.context("--target is required with --file")?;
                if channels.is_empty() {
                    bail!("--channels is required with --file");
                }
                let s = workflow::ingest_file(&well, &file, &channels, &target)?;
                print!("{}", validation_report(&s));
            }
            _ => {
                for r in workflow::ingest_reports(&cli.common.load()?)? {
                    print!("{r}");
                }
            }
        },
        Verb::Segment => {
            let seg = workflow::segment(&cli.common.load()?)?;
            for w in &seg.summary {
                println!(
                    "{}: {} samples, {} segments covering {}, {} short runs dropped",
                    w.well_id,
                    w.samples,
                    w.segments.len(),
                    w.covered(),
                    w.dropped
                );
            }
            println!("{} {}", if seg.cache_hit { "cached" } else { "wrote" }, seg.path.display());
        }
        Verb::Windows => {
            let w = workflow::windows(&cli.common.load()?)?;
            let d = &w.data;
            println!(
                "train {} / validation {} / test {} windows of {}x{}",
                d.train.len(),
                d.validation.len(),
                d.test.len(),
                d.train.window_len(),
                d.train.features()
            );
            println!("split listed in {}", w.split_file.display());
        }
        Verb::Baseline { cell } => {
            let m = cli.common.load()?;
            let cells = cell.map_or_else(|| vec![CellKind::Lstm, CellKind::Gru], |c| vec![c]);
            for r in workflow::baselines(&m, &cells)? {
                println!("{}: test MAE {:.6}, RMSE {:.6}", r.name(), r.test_mae, r.test_rmse);
            }
        }
        Verb::Pretrain { config } => {
            let (path, rep) = workflow::pretrain_config(&cli.common.load()?, &config)?;
            println!(
                "{config}: {} epochs, best val loss {:.6}; saved {}",
                rep.epochs_run(),
                rep.best_val_loss,
                path.display()
            );
        }
        Verb::Finetune { config } => {
            let r = workflow::finetune_config(&cli.common.load()?, &config)
                .with_context(|| format!("fine-tuning {config} needs a prior `pretrain --config {config}`"))?;
            println!("{}: test MAE {:.6}, RMSE {:.6}", r.name(), r.test_mae, r.test_rmse);
        }
        Verb::Dse { no_snapshots } => {
            let m = cli.common.load()?;
            let out = workflow::search(&m, !no_snapshots)?;
            for row in rank_and_compare(&out.records)?.iter().take(10) {
                println!(
                    "{:>3} {:<26} MAE {:.6}  vs LSTM {:+.1}%  vs GRU {:+.1}%",
                    row.rank,
                    row.name,
                    row.test_mae,
                    100.0 * row.delta_vs_lstm,
                    100.0 * row.delta_vs_gru
                );
            }
            println!("ledger: {}", out.ledger.display());
            println!("{} report files in {}", out.reports.len(), workflow::reports_dir(&m).display());
        }
        Verb::Report { ledger, to } => {
            let (ledger, to) = match (ledger, to) {
                (Some(l), Some(t)) => (l, t),
                (l, t) => {
                    let m = cli.common.load()?;
                    (l.unwrap_or_else(|| workflow::ledger_path(&m)), t.unwrap_or_else(|| workflow::reports_dir(&m)))
                }
            };
            let files = workflow::report(&ledger, &to)?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}
