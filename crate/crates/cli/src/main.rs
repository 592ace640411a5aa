//! Command-line driver for the defi-tiers pipeline.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use defi_tiers::ErrorKind;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "defi-tiers", version, about = "Token credit hierarchy, layering multiplier and yield panel analysis")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Snapshot file; replaces the configured snapshot list. Repeatable.
    #[arg(long = "input", global = true)]
    inputs: Vec<PathBuf>,
    /// Log at debug level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
pub struct DiscoveryOverrides {
    #[arg(long)]
    pub min_outdeg: Option<usize>,
    #[arg(long)]
    pub min_tvl: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse snapshots and resolve token identity.
    Ingest,
    /// Build the full and derivation graphs.
    Graph(DiscoveryOverrides),
    /// Discover base tokens and assign tiers.
    Tiers(DiscoveryOverrides),
    /// Hop distance of every token to the nearest base token.
    Distance(DiscoveryOverrides),
    /// Layering multiplier, decomposition and tier transitions.
    Multiplier(DiscoveryOverrides),
    /// Embedded yields along each token's derivation chain.
    EmbedYield(DiscoveryOverrides),
    /// Build the pool-month panel.
    Panel,
    /// Run the regression suite on the panel.
    Regress {
        #[arg(long)]
        panel: Option<PathBuf>,
    },
    /// Permutation test of the tier coefficient.
    Placebo {
        #[arg(long)]
        panel: Option<PathBuf>,
        #[arg(long)]
        n_perm: Option<usize>,
        #[arg(long)]
        spec: Option<String>,
    },
    /// Rolling-window coefficients.
    Rolling {
        #[arg(long)]
        panel: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Separate fits inside event windows.
    Events {
        #[arg(long)]
        panel: Option<PathBuf>,
    },
    /// Base-set similarity across discovery thresholds.
    Sensitivity,
    /// Tier agreement of later snapshots with the first.
    Stability,
    /// Disable each derivation filter step in turn.
    Ablate,
    /// Generate a synthetic ecosystem with known truth.
    Synth {
        #[arg(long)]
        n_base: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Check pipeline output against the synthetic truth.
    Verify,
    /// Headline numbers in one summary.
    Report,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Internal => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let run = || -> defi_tiers::Result<()> {
        let mut cfg = RunConfig::load(cli.config.as_deref())?;
        if let Some(o) = &cli.out {
            cfg.out = o.clone();
        }
        if let Some(s) = cli.seed {
            cfg.seed = s;
            cfg.synth.seed = s;
        }
        if !cli.inputs.is_empty() {
            cfg.inputs.snapshots = cli.inputs.clone();
        }
        commands::dispatch(&cli.command, cfg)
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
