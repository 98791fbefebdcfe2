//! `hybridlift` command-line pipeline.

// negated comparisons keep NaN config values on the error path
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod config;
mod error;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use artifacts::OutDir;
use config::RunConfig;
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "hybridlift", version, about = "Multi-population mortality forecasting and longevity risk pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides HYBRIDLIFT_OUT and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replaces the config seed (and therefore the config hash).
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Decompose the cluster and run stationarity diagnostics.
    Fit,
    /// Train the recurrent network on the factor panel.
    Train,
    /// Stochastic factor paths, fan charts and e0 projections.
    Forecast,
    /// Out-of-sample comparison against the linear benchmark.
    Validate,
    /// Temporal saliency, Shapley influence and the lookback sweep.
    Explain,
    /// Capital measures, reverse stress and the monotonicity check.
    Stress,
    /// Ablation of differencing and bias correction.
    Ablate,
    /// Write a synthetic cluster fixture.
    Synth,
}

fn init_logging(quiet: bool) {
    let filter = if quiet {
        "error".to_string()
    } else {
        std::env::var("HYBRIDLIFT_LOG").unwrap_or_else(|_| "info".into())
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&filter)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

fn run(cli: &Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed_override {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let root = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("HYBRIDLIFT_OUT").map(PathBuf::from))
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out, set HYBRIDLIFT_OUT or out_dir".into()))?;
    let hash = cfg.hash();
    log::debug!("config hash {hash}");
    let out = OutDir::new(root, hash, cfg.seed)?;
    match cli.command {
        Command::Fit => stages::fit(&cfg, &out),
        Command::Train => stages::train(&cfg, &out),
        Command::Forecast => stages::forecast(&cfg, &out),
        Command::Validate => stages::validate(&cfg, &out),
        Command::Explain => stages::explain(&cfg, &out),
        Command::Stress => stages::stress(&cfg, &out),
        Command::Ablate => stages::ablate_stage(&cfg, &out),
        Command::Synth => stages::synth(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.quiet);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
