//! Command-line driver for `sqm-core`: configuration, subcommands and the
//! file formats they read and write.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{Config, OUTPUT_DIR_ENV};
use crate::error::CliError;
use crate::io::RunOutput;

#[derive(Debug, Parser)]
#[command(name = "sqm", version, about = "Simultaneous continuous measurement of a qubit along two axes")]
pub struct Cli {
    /// JSON configuration file; omitted keys keep their defaults.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration leaf, e.g. `--set simulate.duration_s=2e-6`.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory (also settable through SQM_OUTPUT_DIR).
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for ensembles; defaults to the available cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate trajectories and their measurement records.
    Simulate,
    /// Replay a record through the filter.
    Filter,
    /// Ensemble distributions over the Bloch ball (Monte Carlo and PDE).
    Distributions,
    /// Angular variance growth inside a ring and its slope.
    Diffusion,
    /// Disturbance maps over the sphere, the equatorial disk and the ball.
    Disturbance,
    /// Maximum-likelihood estimates of unknown initial states.
    Mle,
    /// Rate and efficiency estimators, and tomographic validation.
    Calibrate,
    /// Joint qubit-cavity simulation against the effective model.
    Oracle,
    /// Run every acceptance criterion and report pass or fail.
    Acceptance,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Filter => "filter",
            Command::Distributions => "distributions",
            Command::Diffusion => "diffusion",
            Command::Disturbance => "disturbance",
            Command::Mle => "mle",
            Command::Calibrate => "calibrate",
            Command::Oracle => "oracle",
            Command::Acceptance => "acceptance",
        }
    }
}

/// Resolve the configuration: file, overrides, then flags and environment.
pub fn resolve_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    } else if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        cfg.output_dir = PathBuf::from(dir);
    }
    Ok(cfg)
}

fn acceptance(cfg: &Config, out: &mut RunOutput) -> Result<(Value, usize), CliError> {
    let mut outcomes = Vec::new();
    for (id, _) in acceptance::CRITERIA {
        if !cfg.acceptance.only.is_empty() && !cfg.acceptance.only.iter().any(|o| o == id) {
            continue;
        }
        let o = acceptance::run(id, cfg.seed)?;
        println!("{}", o.line());
        outcomes.push(o);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    let report = json!({ "criteria": outcomes, "passed": outcomes.len() - failed, "failed": failed });
    out.json("acceptance.json", &report)?;
    Ok((json!({ "passed": outcomes.len() - failed, "failed": failed }), failed))
}

/// Run one parsed command to completion.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        // Fails only if the pool was already built, which keeps the first setting.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut out = RunOutput::create(&cfg.output_dir)?;
    let mut failed = 0;
    let result = match cli.command {
        Command::Simulate => commands::simulate(&cfg, &mut out),
        Command::Filter => commands::filter_cmd(&cfg, &mut out),
        Command::Distributions => commands::distributions(&cfg, &mut out),
        Command::Diffusion => commands::diffusion(&cfg, &mut out),
        Command::Disturbance => commands::disturbance(&cfg, &mut out),
        Command::Mle => commands::mle(&cfg, &mut out),
        Command::Calibrate => commands::calibrate(&cfg, &mut out),
        Command::Oracle => commands::oracle(&cfg, &mut out),
        Command::Acceptance => acceptance(&cfg, &mut out).map(|(v, f)| {
            failed = f;
            v
        }),
    };
    match result {
        Ok(summary) => {
            let total = summary.get("passed").and_then(Value::as_u64).unwrap_or(0) as usize + failed;
            out.finish(cli.command.name(), &cfg, summary)?;
            if failed > 0 {
                return Err(CliError::Acceptance { failed, total });
            }
            Ok(())
        }
        Err(e) => {
            out.abort();
            Err(e)
        }
    }
}

/// Parse `args`, run, and return the process exit status. Errors are
/// reported on stderr as JSON.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
