//! Command-line runner: resolves a configuration, runs one pipeline and
//! writes a manifest next to its outputs.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;

use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use config::{merge, Command, Config};
use output::OutputDir;

pub const EXIT_ERROR: i32 = 1;

#[derive(Parser, Debug)]
#[command(name = "heatbath", version, about = "Heat-bath chain experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
    /// TOML configuration, layered over the preset if one is given.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; defaults to $THREADS, then to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub preset: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
pub enum Cmd {
    /// C_hat, K(k), kappa and zeta*.
    Constants,
    /// Rate-table regime over a (k, T_inf) grid.
    PhaseDiagram,
    /// Ensemble statistics, median slope and moment envelopes.
    Simulate,
    /// Hill index of stationary energies.
    Tails,
    /// Total-variation proxy to a reference ensemble and its decay family.
    Convergence,
    /// Drift-sign or Wonham verification of test functions.
    Verify,
    /// One-dimensional reduced diffusion.
    Reduced,
    /// Lists the presets.
    Presets,
}

fn command(c: Cmd) -> Option<Command> {
    Some(match c {
        Cmd::Constants => Command::Constants,
        Cmd::PhaseDiagram => Command::PhaseDiagram,
        Cmd::Simulate => Command::Simulate,
        Cmd::Tails => Command::Tails,
        Cmd::Convergence => Command::Convergence,
        Cmd::Verify => Command::Verify,
        Cmd::Reduced => Command::Reduced,
        Cmd::Presets => return None,
    })
}

fn threads(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("THREADS") {
            Ok(v) => v.trim().parse().with_context(|| format!("THREADS must be a positive integer, got '{v}'"))?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(anyhow!("thread count must be positive"));
    }
    Ok(n)
}

/// Preset, then config file, then `--seed`, resolved and validated.
pub fn load_config(cli: &Cli, cmd: Command) -> Result<Config> {
    let mut table = toml::Table::new();
    if let Some(name) = &cli.preset {
        let p = presets::find(name, cmd)?;
        table = p.toml.parse().with_context(|| format!("preset '{name}'"))?;
    }
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let user: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
        merge(&mut table, user);
    }
    let mut cfg: Config = toml::Value::Table(table).try_into().context("invalid configuration")?;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    cfg.resolve(cmd)
}

pub fn run(cli: &Cli) -> i32 {
    match try_run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn try_run(cli: &Cli) -> Result<i32> {
    let Some(cmd) = command(cli.command) else {
        for p in presets::PRESETS {
            println!("{:<22} {:<12} {}", p.name, p.command.name(), p.about);
        }
        return Ok(commands::EXIT_OK);
    };
    let n = threads(cli.threads)?;
    let cfg = load_config(cli, cmd)?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    let mut out = OutputDir::create(&cli.out)?;
    out.write("config.toml", cfg.to_toml()?.as_bytes())?;
    let code = commands::run(cmd, &cfg, &mut out)?;
    out.finish(cmd.name(), &cfg, n, code)?;
    Ok(code)
}
