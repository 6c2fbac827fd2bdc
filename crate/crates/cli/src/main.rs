//! `graphon` command line driver.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use config::{read_config, resolve, Overrides};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "graphon", version, about = "Graphon mean field games: solvers, simulators and diagnostics")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment config or re-run a manifest.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a config field, e.g. `--set model.c=2`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Linear-quadratic flocking game.
    #[command(subcommand)]
    Lq(LqCmd),
    /// Finite-population simulation.
    #[command(subcommand)]
    Arena(ArenaCmd),
    /// Nash gap estimation.
    #[command(subcommand)]
    Nashgap(NashgapCmd),
}

#[derive(Subcommand)]
enum LqCmd {
    /// Solve for the equilibrium target.
    Solve {
        /// Kernel JSON file.
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        c: f64,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long = "L")]
        labels: usize,
        /// Initial law JSON file (default: X0 = U).
        #[arg(long)]
        initial: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo check of a solution.
    Verify {
        #[arg(long)]
        sol: PathBuf,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ArenaCmd {
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    xi: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// `lq:<sol.json>`, `mfg:<dir>` or `constant:<action>`.
    #[arg(long)]
    profile: String,
    /// Model JSON file; defaults to the profile's model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Initial law JSON file; defaults to the profile's law.
    #[arg(long)]
    initial: Option<PathBuf>,
    #[arg(long)]
    paths: usize,
    #[arg(long)]
    dt: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum NashgapCmd {
    Sweep {
        /// Sweep JSON file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(path, e))
}

fn cwd() -> CliResult<PathBuf> {
    std::env::current_dir().map_err(|e| CliError::input(".", e))
}

fn base_of(path: &Path) -> CliResult<PathBuf> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf);
    let dir = dir.unwrap_or(PathBuf::from("."));
    Ok(if dir.is_absolute() { dir } else { cwd()?.join(dir) })
}

fn object(pairs: Vec<(&str, Value)>) -> Value {
    let mut m = Map::new();
    for (k, v) in pairs {
        if !v.is_null() {
            m.insert(k.to_owned(), v);
        }
    }
    Value::Object(m)
}

fn optional_json(path: &Option<PathBuf>) -> CliResult<Value> {
    path.as_deref().map(load_json).transpose().map(Option::unwrap_or_default)
}

/// Config value, base directory for relative inputs, and flag overrides.
fn plan(cmd: Cmd) -> CliResult<(Value, PathBuf, Overrides)> {
    let here = cwd()?;
    let abs = |p: PathBuf| if p.is_absolute() { p } else { here.join(p) };
    Ok(match cmd {
        Cmd::Run { config, out, seed, set } => {
            let base = base_of(&config)?;
            (read_config(&config)?, base, Overrides { out: out.map(abs), seed, set })
        }
        Cmd::Lq(LqCmd::Solve { kernel, c, horizon, sigma, labels, initial, out }) => {
            let v = object(vec![
                ("command", json!("lq-solve")),
                ("kernel", json!(kernel)),
                ("c", json!(c)),
                ("T", json!(horizon)),
                ("sigma", json!(sigma)),
                ("L", json!(labels)),
                ("initial", optional_json(&initial)?),
            ]);
            (v, here.clone(), Overrides { out: Some(abs(out)), ..Default::default() })
        }
        Cmd::Lq(LqCmd::Verify { sol, paths, dt, seed, out }) => {
            let v = object(vec![
                ("command", json!("lq-verify")),
                ("sol", json!(sol)),
                ("paths", json!(paths)),
                ("dt", json!(dt)),
                ("seed", json!(seed)),
            ]);
            (v, here.clone(), Overrides { out: Some(abs(out)), ..Default::default() })
        }
        Cmd::Arena(ArenaCmd::Simulate(a)) => {
            let v = object(vec![
                ("command", json!("arena-simulate")),
                ("xi", json!(a.xi)),
                ("labels", json!(a.labels)),
                ("profile", json!(a.profile)),
                ("model", optional_json(&a.model)?),
                ("initial", optional_json(&a.initial)?),
                ("paths", json!(a.paths)),
                ("dt", json!(a.dt)),
                ("seed", json!(a.seed)),
            ]);
            (v, here.clone(), Overrides { out: Some(abs(a.out)), ..Default::default() })
        }
        Cmd::Nashgap(NashgapCmd::Sweep { config, seed, out }) => {
            let mut v = read_config(&config)?;
            if let Value::Object(m) = &mut v {
                m.entry("command").or_insert(json!("nashgap-sweep"));
            }
            (v, base_of(&config)?, Overrides { out: Some(abs(out)), seed, set: Vec::new() })
        }
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let (raw, base, overrides) = plan(cli.command)?;
    let resolved = resolve(raw, &base, &overrides)?;
    if let Some(t) = cli.threads.or(resolved.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {t} threads: {e}")))?;
    }
    let written = commands::execute(&resolved)?;
    let summary = json!({
        "command": resolved.command.name(),
        "out": resolved.out,
        "files": written,
    });
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code())
        }
    }
}
