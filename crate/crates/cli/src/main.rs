use std::path::PathBuf;
use std::process::ExitCode;

use bellnav_cli::config::{RunConfig, OUT_DIR_ENV};
use bellnav_cli::{commands, exit, CliError};
use clap::{Args, Parser, Subcommand};

/// Optimal Bell measurement settings and phase-transition indicators for
/// spin chains.
#[derive(Parser, Debug)]
#[command(name = "bellnav", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Configuration file (flat `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Optimise every field point from scratch.
    #[arg(long, global = true)]
    no_warm_start: bool,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Output directory; defaults to $BELLNAV_OUT_DIR, then the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute (or load from the cache) the infinite-chain ground state.
    GroundState,
    /// Optimise the measurement settings at one field value.
    Optimize {
        /// Field value; defaults to model.h.
        #[arg(long, allow_hyphen_values = true)]
        h: Option<f64>,
    },
    /// Sweep the field and write records, plots and a report.
    Sweep,
    /// Check the Bell-operator contractions against dense matrices.
    OracleCheck {
        /// Chain length; defaults to oracle.n_sites.
        #[arg(long)]
        n_sites: Option<usize>,
    },
    /// Re-render the plots from a records file.
    Plot {
        /// Records file; defaults to sweep.csv in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load_config(g: &Global) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for s in &g.set {
        cfg.apply_override(s)?;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if g.no_warm_start {
        cfg.warm_start = false;
    }
    if let Some(dir) = &g.cache_dir {
        cfg.cache_dir = dir.clone();
    }
    if let Some(dir) = &g.out_dir {
        cfg.out_dir = dir.clone();
    } else if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
        cfg.out_dir = PathBuf::from(dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::GroundState => commands::ground_state(&cfg).map(drop),
        Command::Optimize { h } => commands::optimize(&cfg, h.unwrap_or(cfg.model.h)).map(drop),
        Command::Sweep => commands::sweep_command(&cfg).map(drop),
        Command::OracleCheck { n_sites } => {
            commands::oracle_command(&cfg, n_sites.unwrap_or(cfg.oracle.n_sites)).map(drop)
        }
        Command::Plot { input } => commands::plot_command(&cfg, input.as_deref()).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
