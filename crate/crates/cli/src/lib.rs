//! Command-line surface: pool generation, synthesis, validation, streaming
//! runs, threshold calibration, training and reporting.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::commands::{CliError, Context, RunArgs, SplitFilter};
use crate::config::{RunConfig, ANALYZER_URL_ENV, ASSESSOR_URL_ENV};

#[derive(Debug, Parser)]
#[command(name = "scamwatch", version, about = "Streaming scam anticipation over app-usage trajectories")]
pub struct Cli {
    /// TOML run configuration; built-in defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides synth.seed and distill.seed, and seeds gen-pools.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for streaming; above 1 the skill library stays frozen.
    #[arg(long, global = true, default_value_t = 1)]
    pub parallel: usize,
    /// Exit 1 on undefined report metrics or an infeasible calibration.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Exit 0 even when validation finds violations.
    #[arg(long, global = true)]
    pub allow_violations: bool,
    /// Output directory; overrides io.out_dir.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write small synthetic normal and scam trace pools.
    GenPools {
        #[arg(long, default_value_t = 60)]
        n_normal: usize,
        #[arg(long, default_value_t = 5)]
        scams_per_type: usize,
    },
    /// Build a dataset and manifest from trace pools, then validate it.
    Synth {
        /// Normal trace pool; defaults to io.normal_pool, then <out>/normal_pool.jsonl.
        #[arg(long)]
        normal_pool: Option<PathBuf>,
        /// Scam trace pool; defaults to io.scam_pool, then <out>/scam_pool.jsonl.
        #[arg(long)]
        scam_pool: Option<PathBuf>,
    },
    /// Check a dataset against its manifest.
    Validate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Stream a dataset through the assessor; write predictions and a report.
    Run {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitFilter::All)]
        split: SplitFilter,
        /// Skill library JSON; overrides skills.library.
        #[arg(long)]
        skills: Option<PathBuf>,
        /// Write the library as it stands after the run.
        #[arg(long)]
        save_skills: Option<PathBuf>,
    },
    /// Pick the alert threshold on a split under a FAR budget.
    Calibrate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitFilter::Validation)]
        split: SplitFilter,
        /// Overrides assessor.far_budget.
        #[arg(long)]
        far_budget: Option<f64>,
        #[arg(long)]
        skills: Option<PathBuf>,
    },
    /// Fit logistic assessor parameters by fine-tuning and self-distillation.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        skills: Option<PathBuf>,
    },
    /// Recompute metrics from stored predictions and write breakdown CSVs.
    Report {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Supplies the scam types for the per-type table.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// A run report whose metrics must equal the recomputed ones.
        #[arg(long)]
        expect: Option<PathBuf>,
    },
}

fn command() -> clap::Command {
    let defaults = format!(
        "Exit codes: 0 success, 1 metric or validation failure, 2 input error, 3 external-service error.\n\n\
         Environment: {ASSESSOR_URL_ENV} and {ANALYZER_URL_ENV} override the endpoint URLs.\n\n\
         Configuration defaults (every key is optional):\n\n{}",
        RunConfig::default_toml()
    );
    Cli::command().after_long_help(defaults)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::input)?,
        None => RunConfig::default(),
    };
    config.apply_env();
    if let Some(seed) = cli.seed {
        config.synth.seed = seed;
        config.distill.seed = seed;
    }
    if cli.parallel == 0 {
        return Err(CliError::input("--parallel must be at least 1"));
    }
    let ctx = Context {
        out_dir: cli.out_dir.clone().unwrap_or_else(|| config.io.out_dir.clone()),
        config,
        parallel: cli.parallel,
        strict: cli.strict,
        allow_violations: cli.allow_violations,
    };
    match &cli.command {
        Command::GenPools {
            n_normal,
            scams_per_type,
        } => commands::gen_pools(&ctx, cli.seed.unwrap_or(0), *n_normal, *scams_per_type),
        Command::Synth { normal_pool, scam_pool } => {
            commands::synth(&ctx, normal_pool.as_deref(), scam_pool.as_deref())
        }
        Command::Validate { dataset, manifest } => {
            commands::validate_cmd(&ctx, dataset.as_deref(), manifest.as_deref())
        }
        Command::Run {
            dataset,
            split,
            skills,
            save_skills,
        } => commands::run(
            &ctx,
            &RunArgs {
                dataset: dataset.as_deref(),
                split: *split,
                skills: skills.as_deref(),
                save_skills: save_skills.as_deref(),
            },
        ),
        Command::Calibrate {
            dataset,
            split,
            far_budget,
            skills,
        } => commands::calibrate(&ctx, dataset.as_deref(), *split, *far_budget, skills.as_deref()),
        Command::Train { dataset, skills } => commands::train_cmd(&ctx, dataset.as_deref(), skills.as_deref()),
        Command::Report {
            predictions,
            dataset,
            manifest,
            expect,
        } => commands::report(&ctx, predictions.as_deref(), dataset.as_deref(), manifest.as_deref(), expect.as_deref()),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match command().try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { commands::EXIT_INPUT } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
