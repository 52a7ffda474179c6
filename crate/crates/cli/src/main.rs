//! `chwave`: transform, evolve and analyse two-component Camassa-Holm data.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 when the
//! integration aborts, 1 for anything else (I/O and the like).

use std::path::PathBuf;
use std::process::ExitCode;

use chwave::commands::{run, Command};
use chwave::config::RunConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chwave", version, about = "Conservative two-component Camassa-Holm solver")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Map a preset to Lagrangian coordinates and back, reporting round-trip errors.
    Transform(Common),
    /// Integrate the Lagrangian system and record diagnostics.
    Evolve(Common),
    /// Classify every grid point of the initial data as breaking or not.
    Predict(Common),
    /// Tabulate the characteristic vector field on a lattice.
    Vectorfield(Common),
    /// Report invariants and bounds of the initial data.
    Diagnose(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set dt=5e-4`. Repeatable.
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (same as `--set out_dir=...`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Preset name (same as `--set preset=...`).
    #[arg(short, long)]
    preset: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::Transform(c) => (Command::Transform, c),
        Cmd::Evolve(c) => (Command::Evolve, c),
        Cmd::Predict(c) => (Command::Predict, c),
        Cmd::Vectorfield(c) => (Command::Vectorfield, c),
        Cmd::Diagnose(c) => (Command::Diagnose, c),
    };

    let mut overrides = common.set;
    if let Some(p) = common.preset {
        overrides.push(format!("preset=\"{p}\""));
    }
    if let Some(o) = common.out {
        overrides.push(format!("out_dir={:?}", o.display().to_string()));
    }

    let result = RunConfig::load(common.config.as_deref(), &overrides).and_then(|cfg| run(cmd, &cfg));
    match result {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("chwave {}: {e}", cmd.name());
            ExitCode::from(if e.is_config() {
                2
            } else if e.is_numerical() {
                3
            } else {
                1
            })
        }
    }
}
