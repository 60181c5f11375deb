//! `sitefit`: reproducible, config-driven runs of the capture, labelling,
//! training and evaluation stages.
//!
//! Failures exit with status 2 and print one JSON object on stderr:
//! `{"error": kind, "message": text, "path": file or null}`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sitefit_harness::config::RunConfig;
use sitefit_harness::error::HarnessError;
use sitefit_harness::pipeline::{self, RunPaths};

#[derive(Parser, Debug)]
#[command(name = "sitefit", version, about = "Site-specific neural receiver finetuning pipeline")]
struct Cli {
    /// Run configuration (TOML); defaults to the built-in desk-scale run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory holding every artifact.
    #[arg(long, global = true, default_value = "runs/desk")]
    out: PathBuf,
    /// Worker threads for slot-parallel evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Finetuning batch counts to checkpoint, e.g. `0,100,10000`.
    #[arg(long, global = true, value_delimiter = ',')]
    checkpoint_schedule: Option<Vec<u64>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulates the training and test capture campaigns.
    Generate,
    /// Extracts labels and writes the finetuning dataset.
    Extract {
        /// Capture store to label instead of the run's training capture.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Pretrains on randomized channels.
    Pretrain,
    /// Finetunes a checkpoint on a dataset.
    Finetune {
        /// Starting checkpoint instead of the run's pretrained model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset file instead of the run's extracted dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Dataset BLER of the reference and neural receivers on the test sets.
    Evaluate {
        /// Checkpoints to evaluate instead of the run's pretrained and final models.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// One experiment sweep.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
    },
    /// Every stage in order, skipping those already up to date.
    Run,
    /// Prints the resolved configuration.
    Config,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepKind {
    Depth,
    Batches,
    Snr,
}

fn error_kind(e: &HarnessError) -> &'static str {
    match e {
        HarnessError::Config(_) => "config",
        HarnessError::Invalid { .. } => "invalid-input",
        HarnessError::Overlap { .. } => "test-train-overlap",
        HarnessError::Io { .. } => "io",
        HarnessError::Phy(_) => "phy",
        HarnessError::Store(_) => "store",
        HarnessError::Nrx(_) => "model",
    }
}

fn log(msg: &str) {
    eprintln!("{msg}");
}

fn warn(msg: &str) {
    eprintln!("{}", serde_json::json!({ "warning": msg }));
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(s) = &cli.checkpoint_schedule {
        cfg.finetune.schedule = s.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Warns when the run directory already holds a different configuration
/// under the same seed, since its artifacts will be replaced.
fn check_seed_collision(cfg: &RunConfig, out: &Path) {
    let path = RunPaths::new(out).config();
    let Ok(text) = std::fs::read_to_string(&path) else {
        return;
    };
    if let Ok(prev) = RunConfig::from_toml(&text, &path) {
        if prev.seed == cfg.seed && prev != *cfg {
            warn(&format!(
                "seed {} was used in {} with a different configuration; affected stages will be recomputed",
                cfg.seed,
                out.display()
            ));
        }
    }
}

fn require(path: &Path) -> Result<(), HarnessError> {
    if path.exists() {
        Ok(())
    } else {
        Err(HarnessError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")))
    }
}

fn execute(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = resolve_config(cli)?;
    if let Command::Config = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    check_seed_collision(&cfg, &cli.out);
    let paths = RunPaths::new(&cli.out);
    std::fs::create_dir_all(&cli.out).map_err(|e| HarnessError::io(&cli.out, e))?;
    std::fs::write(paths.config(), cfg.to_toml()).map_err(|e| HarnessError::io(paths.config(), e))?;
    match &cli.command {
        Command::Generate => pipeline::stage_generate(&cfg, &paths, &log),
        Command::Extract { store: None } => pipeline::stage_extract(&cfg, &paths, &log),
        Command::Extract { store: Some(dir) } => {
            require(dir)?;
            let m = pipeline::extract_dataset(
                dir,
                &paths.dataset(),
                &paths.labels(),
                cfg.dataset.n_slots,
                cfg.dataset.fail_fraction,
                cfg.seed,
            )?;
            let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
            std::fs::write(paths.dataset_manifest(), text).map_err(|e| HarnessError::io(paths.dataset_manifest(), e))
        }
        Command::Pretrain => pipeline::stage_pretrain(&cfg, &paths, &log),
        Command::Finetune {
            checkpoint: None,
            dataset: None,
        } => pipeline::stage_finetune(&cfg, &paths, &log),
        Command::Finetune { checkpoint, dataset } => {
            let start = checkpoint.clone().unwrap_or_else(|| paths.pretrained());
            let data = dataset.clone().unwrap_or_else(|| paths.dataset());
            require(&start)?;
            require(&data)?;
            pipeline::finetune_from(&cfg, &start, &data, &paths, &log)
        }
        Command::Evaluate { checkpoints } => {
            let owned: Vec<(String, _)> = if checkpoints.is_empty() {
                pipeline::run_models(&cfg, &paths)?.into_iter().map(|(n, m)| (n.to_string(), m)).collect()
            } else {
                checkpoints
                    .iter()
                    .map(|p| {
                        let name = p.file_stem().map_or("checkpoint".into(), |s| s.to_string_lossy().into_owned());
                        Ok((name, pipeline::load_model(&cfg, p)?))
                    })
                    .collect::<Result<_, HarnessError>>()?
            };
            let models: Vec<(&str, _)> = owned.iter().map(|(n, m)| (n.as_str(), m)).collect();
            pipeline::write_bler_reports(&cfg, &paths, &models, &log)
        }
        Command::Sweep { kind } => {
            let owned = pipeline::run_models(&cfg, &paths)?;
            let models: Vec<(&str, _)> = owned.iter().map(|(n, m)| (*n, m)).collect();
            match kind {
                SweepKind::Depth => {
                    pipeline::write_bler_reports(&cfg, &paths, &models, &log)?;
                    pipeline::write_latency_report(&cfg, &paths, &models)
                }
                SweepKind::Batches => pipeline::write_batch_report(&cfg, &paths, &log),
                SweepKind::Snr => pipeline::write_snr_report(&cfg, &paths, &models, &log),
            }
        }
        Command::Run => pipeline::run_pipeline(&cfg, &cli.out, &log).map(|_| ()),
        Command::Config => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "error": error_kind(&e),
                "message": e.to_string(),
                "path": e.path().map(|p| p.display().to_string()),
            });
            eprintln!("{report}");
            ExitCode::from(2)
        }
    }
}
