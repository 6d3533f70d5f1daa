//! Command-line runner for the `entcert` library.
//!
//! Every subcommand resolves defaults, then the `--config` file, then flags,
//! runs, and writes its outputs plus the resolved `run_config.toml` into the
//! output directory. Rerunning with `--config <out>/run_config.toml`
//! reproduces the outputs byte for byte.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{variant_format, ModelChoice, RunConfig};
use crate::error::CliError;
use crate::output::OutDir;

#[derive(Debug, Parser)]
#[command(name = "entcert", version, about = "Entanglement certification and sample-homogeneity experiments")]
pub struct Cli {
    /// Master seed (default 2024, or the config file's value).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "entcert-out")]
    pub out: PathBuf,
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Number of runs (dice, protocol).
    #[arg(long, global = true)]
    pub runs: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// CHSH value, negativity and an angle scan for a two-qubit state.
    Chsh(ChshArgs),
    /// Exact and sampled moments of the two-dice ensemble.
    Dice(DiceArgs),
    /// Covariance identity for product states and the spin counterexample.
    Torre(TorreArgs),
    /// Simulate a measurement protocol, test H0 per run and audit pooled runs.
    Protocol(ProtocolArgs),
    /// Homogeneity battery on outcomes read from a file.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct ChshArgs {
    /// singlet, werner:<w>, mixed-demo, aligned:<deg>, convex:<w>@x,y,z|x,y,z;...
    #[arg(long)]
    pub state: Option<String>,
    /// Maximize S over a planar angle grid.
    #[arg(long)]
    pub optimize: bool,
    #[arg(long)]
    pub grid_step_deg: Option<f64>,
    /// a,a',b,b' in degrees.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub angles: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct DiceArgs {
    #[arg(long)]
    pub trials: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TorreArgs {
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub spin_theta_deg: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// iid, blockm or blockn.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub n2: Option<usize>,
    /// Consecutive runs pooled per audit.
    #[arg(long)]
    pub pool: Option<u64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Named model (loophole-default).
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// One outcome per line.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Defaults, then the config file, then flags. Only the table of the chosen
/// subcommand is kept.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = RunConfig {
        master_seed: cli.seed.unwrap_or(file.master_seed),
        ..RunConfig::default()
    };
    match &cli.command {
        Command::Chsh(a) => {
            let mut s = file.chsh.unwrap_or_default();
            set(&mut s.state, a.state.clone());
            s.optimize |= a.optimize;
            set(&mut s.grid_step_deg, a.grid_step_deg);
            if let Some(v) = &a.angles {
                s.angles_deg = v
                    .as_slice()
                    .try_into()
                    .map_err(|_| CliError::usage(format!("--angles needs four values, got {}", v.len())))?;
            }
            cfg.chsh = Some(s);
        }
        Command::Dice(a) => {
            let mut s = file.dice.unwrap_or_default();
            set(&mut s.trials, a.trials);
            set(&mut s.runs, cli.runs);
            cfg.dice = Some(s);
        }
        Command::Torre(a) => {
            let mut s = file.torre.unwrap_or_default();
            set(&mut s.levels, a.levels);
            set(&mut s.samples, a.samples);
            set(&mut s.spin_theta_deg, a.spin_theta_deg);
            cfg.torre = Some(s);
        }
        Command::Protocol(a) => {
            let mut s = file.protocol.unwrap_or_default();
            if let Some(v) = &a.variant {
                s.variant = variant_format::parse(v)
                    .ok_or_else(|| CliError::usage(format!("unknown variant {v:?} (iid, blockm, blockn)")))?;
            }
            set(&mut s.n1, a.n1);
            set(&mut s.n2, a.n2);
            set(&mut s.pool, a.pool);
            set(&mut s.bins, a.bins);
            set(&mut s.alpha, a.alpha);
            set(&mut s.runs, cli.runs);
            set(&mut s.model, a.model.clone().map(ModelChoice::Named));
            cfg.protocol = Some(s);
        }
        Command::Audit(a) => {
            let mut s = file.audit.unwrap_or_default();
            set(&mut s.input, a.input.clone());
            set(&mut s.bins, a.bins);
            set(&mut s.alpha, a.alpha);
            cfg.audit = Some(s);
        }
    }
    Ok(cfg)
}

fn dispatch(cfg: &RunConfig, out: &OutDir) -> Result<String, CliError> {
    let seed = cfg.master_seed;
    if let Some(s) = &cfg.chsh {
        commands::chsh::run(s, out)
    } else if let Some(s) = &cfg.dice {
        commands::dice::run(s, seed, out)
    } else if let Some(s) = &cfg.torre {
        commands::torre::run(s, seed, out)
    } else if let Some(s) = &cfg.protocol {
        commands::protocol::run(s, seed, out)
    } else if let Some(s) = &cfg.audit {
        commands::audit::run(s, out)
    } else {
        Err(CliError::usage("no subcommand configured"))
    }
}

/// Resolve, run and write outputs. Returns a one-line summary.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = resolve(cli)?;
    let out = OutDir::create(&cli.out)?;
    let summary = match cli.workers {
        Some(0) => return Err(CliError::usage("--workers must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage(e.to_string()))?
            .install(|| dispatch(&cfg, &out))?,
        None => dispatch(&cfg, &out)?,
    };
    out.write_sidecar(&cfg)?;
    Ok(summary)
}
