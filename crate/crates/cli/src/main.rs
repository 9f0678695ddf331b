//! `somnus` command-line driver.
//!
//! Exit codes: 0 success, 2 usage, 3 invalid config, 4 I/O or file format,
//! 5 runtime failure. Failures print one JSON object to stderr.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use somnus::autoencoder::{pretrain, AutoencoderBundle};
use somnus::config::{BundleSource, RunConfig, SynthKind};
use somnus::data::formats::{load_images, load_text, save_images, save_text};
use somnus::data::synth::{gen_synthetic_images, gen_synthetic_text, ImageKind, TextKind};
use somnus::data::Dataset;
use somnus::dream::dream_dump;
use somnus::model::{BlockGraph, Task};
use somnus::train::{evaluate_loss, run, run_ablation, threads_from_env, Suite};
use somnus::Error;

#[derive(Parser)]
#[command(name = "somnus", version, about = "Sleep and dream hybrid classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. `--set optimizer.lr=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Sets both the model and the optimizer seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
            overrides.push(format!("optimizer.seed={s}"));
        }
        RunConfig::load_with_overrides(Some(&self.config), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file (.simg or .stxt).
    Gen {
        #[arg(long, value_parser = parse_kind)]
        kind: SynthKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image side length.
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 2000)]
        vocab: usize,
        #[arg(long, default_value_t = 32)]
        seq_len: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the autoencoder bundle described by a config.
    Pretrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes metrics, summary, timing, config and weights.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to `output_dir` from the config, then `./run`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy and loss of a saved model on a dataset file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run an ablation grid.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// block_count, chain_kind, bundle_kind, freeze or variant.
        #[arg(long)]
        suite: Suite,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parallel cells; defaults to SOMNUS_THREADS or 1.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Dump the dream stages of one sample through a dream model.
    Dream {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Defaults to the model's block count.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the cost report of the model a config describes.
    Cost {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn parse_kind(s: &str) -> Result<SynthKind, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown kind `{s}` (shapes2, shapes4, keyword2, keyword4)"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::MissingBundle(_) | Error::Build { .. } => 3,
        Error::Io(_)
        | Error::Json(_)
        | Error::Format { .. }
        | Error::Version { .. }
        | Error::Checksum { .. }
        | Error::LabelOutOfRange { .. }
        | Error::Dataset(_)
        | Error::EmptyDataset => 4,
        _ => 5,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match exit_code(e) {
        3 => "config",
        4 => "io",
        _ => "runtime",
    }
}

fn load_dataset(path: &Path, task: Task) -> Result<Dataset, Error> {
    Ok(match task {
        Task::Visual => Dataset::Images(load_images(path)?),
        Task::Textual => Dataset::Text(load_text(path)?),
    })
}

/// Writes to stdout. A closed pipe (`somnus ... | head`) is not an error.
fn emit(text: &str) -> Result<(), Error> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<(), Error> {
    emit(&(serde_json::to_string_pretty(v)? + "\n"))
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Gen { kind, n, noise, seed, size, vocab, seq_len, out } => {
            match kind {
                SynthKind::Shapes2 | SynthKind::Shapes4 => {
                    let k = if kind == SynthKind::Shapes2 { ImageKind::Shapes2 } else { ImageKind::Shapes4 };
                    save_images(&gen_synthetic_images(k, n, noise as _, seed, size)?, &out)?;
                }
                SynthKind::Keyword2 | SynthKind::Keyword4 => {
                    let k = if kind == SynthKind::Keyword2 { TextKind::Keyword2 } else { TextKind::Keyword4 };
                    save_text(&gen_synthetic_text(k, n, vocab, seq_len, seed)?, &out)?;
                }
            }
            print_json(&json!({ "wrote": out, "samples": n }))
        }
        Command::Pretrain { cfg, out } => {
            let cfg = cfg.load()?;
            let (train, _) = cfg.load_data()?;
            let bundle = pretrain(&train.samples(), &cfg.bundle_arch(), &cfg.pretrain_optimizer())?;
            bundle.save(&out)?;
            print_json(&bundle.manifest)
        }
        Command::Train { cfg, out } => {
            let cfg = cfg.load()?;
            let dir = out
                .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("run"));
            let result = run(&cfg)?;
            result.record.write(&dir)?;
            std::fs::write(dir.join("config.json"), cfg.to_json() + "\n")?;
            result.model.save(dir.join("model.slpn"))?;
            print_json(&json!({
                "model_id": result.record.model_id,
                "status": result.record.status,
                "final_train_accuracy": result.record.final_train_accuracy(),
                "final_test_accuracy": result.record.final_test_accuracy(),
                "params": result.record.cost.param_count,
                "flops": result.record.cost.flops_per_forward,
                "config_hash": result.record.config_hash,
                "out": dir,
            }))
        }
        Command::Eval { model, data } => {
            let model = BlockGraph::load(&model)?;
            let data = load_dataset(&data, model.config().task)?;
            let (loss, accuracy) = evaluate_loss(&model, &data)?;
            print_json(&json!({
                "model_id": model.model_id(),
                "samples": data.len(),
                "accuracy": accuracy,
                "loss": loss,
            }))
        }
        Command::Ablate { cfg, suite, out, threads } => {
            let cfg = cfg.load()?;
            let table = run_ablation(suite, &cfg, threads.unwrap_or_else(threads_from_env))?;
            let dir = out
                .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("run"));
            std::fs::create_dir_all(&dir)?;
            let name = serde_json::to_value(suite)?.as_str().unwrap_or("suite").to_string();
            std::fs::write(dir.join(format!("ablation_{name}.json")), serde_json::to_string_pretty(&table)? + "\n")?;
            emit(&table.report())
        }
        Command::Dream { model, data, index, depth, out } => {
            let model = BlockGraph::load(&model)?;
            let data = load_dataset(&data, model.config().task)?;
            if index >= data.len() {
                return Err(Error::Dataset(format!("index {index} outside {} samples", data.len())));
            }
            let vocab = match &data {
                Dataset::Text(t) => Some(t.vocab.clone()),
                Dataset::Images(_) => None,
            };
            let sample = data.samples().subset(&[index])?;
            let depth = depth.unwrap_or(model.config().blocks);
            let manifest = dream_dump(&model, &sample, depth, vocab.as_deref(), &out)?;
            print_json(&manifest)
        }
        Command::Cost { cfg } => {
            let cfg = cfg.load()?;
            // An untrained bundle has the same cost as a trained one.
            let bundle = match (cfg.needs_bundle(), &cfg.bundle.path) {
                (false, _) => None,
                (true, Some(path)) if cfg.bundle.source == BundleSource::File => Some(AutoencoderBundle::load(path)?),
                (true, _) => Some(AutoencoderBundle::new(cfg.bundle_arch(), cfg.seed)?),
            };
            let model = BlockGraph::build(&cfg.model, bundle, cfg.seed)?;
            print_json(&model.cost_report())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("{}", json!({ "error": error_kind(&e), "code": code, "message": e.to_string() }));
            ExitCode::from(code)
        }
    }
}
