//! Command-line orchestration: configuration, pretraining, evaluation,
//! option analysis and figures.

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod plot;
pub mod schedule;
pub mod train;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::GroupReport;
use crate::longtail::{DatasetManifest, DistributionKind};

pub use analysis::{analyze_options, OptionAnalysis, VariantResult};
pub use checkpoint::Checkpoint;
pub use config::{ObjectiveKind, RunConfig};
pub use plot::{plot, read_plot_values, PlotKind};
pub use train::{evaluate_knn, evaluate_linear, pretrain, run_in_memory, PretrainOutcome, TrainData, Trainer};

#[derive(Debug, Parser)]
#[command(name = "mttv", version, about = "Fused-view contrastive pretraining on long-tailed data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by the commands that start from a configuration.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML run configuration; the built-in synthetic preset when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Force single-threaded, reproducible execution.
    #[arg(long)]
    pub deterministic: bool,
    /// Output directory.
    #[arg(long, default_value = "runs/latest")]
    pub out: PathBuf,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::toy(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Knn,
    Linear,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the long-tailed training split and write its manifests.
    BuildData {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Pretrain an encoder.
    Pretrain {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from this checkpoint (its configuration is used).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Probe a checkpoint's frozen encoder.
    Evaluate {
        #[arg(value_enum)]
        mode: EvalMode,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
    },
    /// Compare pairing options 1-3 and the two-view baselines.
    AnalyzeOptions {
        #[command(flatten)]
        run: RunArgs,
        /// Number of seeds per variant.
        #[arg(long, default_value_t = 3)]
        seeds: usize,
    },
    /// Draw a figure from a metrics log or an option analysis.
    Plot {
        #[arg(value_enum)]
        kind: PlotKind,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
    },
}

/// A probe report as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub mode: String,
    pub epoch: usize,
    pub report: GroupReport,
}

pub fn write_report(path: &Path, mode: &str, epoch: usize, report: &GroupReport) -> Result<()> {
    let file = ReportFile {
        mode: mode.to_string(),
        epoch,
        report: report.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// One table row in percent: accuracy, frequent, medium, rare, spread.
pub fn report_row(report: &GroupReport) -> String {
    format!(
        "Acc {:.2} | Frequent {:.2} | Medium {:.2} | Rare {:.2} | Std {:.2}",
        100.0 * report.overall_acc,
        100.0 * report.frequent_acc,
        100.0 * report.medium_acc,
        100.0 * report.rare_acc,
        100.0 * report.std
    )
}

pub fn build_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let data = TrainData::prepare(cfg)?;
    let name = cfg.data.source.name();
    DatasetManifest::from_dataset(name, &data.train, DistributionKind::Exponential)?.save(&out.join("train-manifest.json"))?;
    DatasetManifest::from_dataset(name, &data.test, DistributionKind::Uniform)?.save(&out.join("test-manifest.json"))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
    println!(
        "{name}: {} training samples, class counts {:?}, {} test samples",
        data.train.len(),
        data.train.class_counts(),
        data.test.len()
    );
    Ok(())
}

pub fn evaluate(checkpoint: &Path, mode: EvalMode, out: &Path) -> Result<GroupReport> {
    if !checkpoint.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("checkpoint {} not found", checkpoint.display()),
        )));
    }
    let ckpt = Checkpoint::load(checkpoint)?;
    let data = TrainData::prepare(&ckpt.config)?;
    let report = match mode {
        EvalMode::Knn => evaluate_knn(&ckpt.pair.query, &ckpt.config, &data)?,
        EvalMode::Linear => evaluate_linear(&ckpt.pair.query, &ckpt.config, &data)?,
    };
    std::fs::create_dir_all(out)?;
    let tag = match mode {
        EvalMode::Knn => "knn",
        EvalMode::Linear => "linear",
    };
    write_report(&out.join(format!("report-{tag}.json")), tag, ckpt.epoch, &report)?;
    Ok(report)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildData { run } => build_data(&run.resolve()?, &run.out),
        Command::Pretrain { run, resume } => {
            let outcome = match &resume {
                Some(p) => {
                    if run.config.is_some() || run.seed.is_some() {
                        return Err(Error::config("--resume takes its configuration from the checkpoint"));
                    }
                    pretrain(&RunConfig::toy(), &run.out, Some(p))?
                }
                None => pretrain(&run.resolve()?, &run.out, None)?,
            };
            println!(
                "trained {} epochs ({} steps); knn {}",
                outcome.epochs,
                outcome.steps,
                report_row(&outcome.final_report)
            );
            Ok(())
        }
        Command::Evaluate { mode, checkpoint, out } => {
            let report = evaluate(&checkpoint, mode, &out)?;
            println!("{}", report_row(&report));
            Ok(())
        }
        Command::AnalyzeOptions { run, seeds } => {
            if seeds == 0 {
                return Err(Error::config("--seeds must be positive"));
            }
            let analysis = analyze_options(&run.resolve()?, seeds)?;
            analysis.write(&run.out)?;
            for v in &analysis.variants {
                let ratios = v
                    .info
                    .map_or_else(|| "-".to_string(), |i| format!("({:.4}, {:.4})", i.left, i.right));
                println!(
                    "{:<16} ratios {:<18} knn {:.2} ± {:.2}  group std {:.2}",
                    v.name,
                    ratios,
                    100.0 * v.summary.overall_acc.mean,
                    100.0 * v.summary.overall_acc.std,
                    100.0 * v.summary.std.mean
                );
            }
            Ok(())
        }
        Command::Plot { kind, input, out } => {
            let files = plot(&input, kind, &out)?;
            println!("{}", files.svg.display());
            Ok(())
        }
    }
}
