//! `pdmp`: experiment runner. Every run writes its artifacts plus
//! `manifest.json` and the resolved `config.toml` into the output directory;
//! `pdmp <command> --config <out>/config.toml` repeats the run exactly.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::ExperimentConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "pdmp", version, about = "PDMP experiments with fast chemical jumps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `sim.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "PDMP_OUT_DIR", default_value = "pdmp-out")]
    out: PathBuf,
    /// Worker threads for ensembles; all cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// One trajectory: grid samples, jump table, summary.
    Simulate,
    /// Deviation from the averaged ODE for increasing λ.
    Lln,
    /// Path rate of a path pair, cell by cell.
    LdpRate,
    /// Tilted ensemble with likelihood-ratio weights.
    Tilt,
    /// Original versus effective model over increasing λ.
    Coarse,
    /// Root structure of F_* over a (β, ε, f) grid.
    MotorPhase,
    /// Terminal basins of the effective motor.
    MotorRun,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Lln => "lln",
            Self::LdpRate => "ldp-rate",
            Self::Tilt => "tilt",
            Self::Coarse => "coarse",
            Self::MotorPhase => "motor-phase",
            Self::MotorRun => "motor-run",
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    threads: Option<usize>,
    wall_time_s: f64,
    files: Vec<&'a str>,
    config: &'a ExperimentConfig,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let (mut cfg, base) = match &cli.config {
        Some(path) => (
            ExperimentConfig::load(path)?,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (ExperimentConfig::default(), PathBuf::new()),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    let threads = cli.threads;
    if threads == Some(0) {
        return Err(CliError::run("threads", "must be at least 1"));
    }
    let artifacts = match cli.command {
        Command::Simulate => commands::simulate(&cfg, threads)?,
        Command::Lln => commands::lln(&cfg, threads)?,
        Command::LdpRate => commands::ldp_rate(&cfg, &base)?,
        Command::Tilt => commands::tilt(&cfg, threads)?,
        Command::Coarse => commands::coarse(&cfg, threads)?,
        Command::MotorPhase => commands::motor_phase(&cfg)?,
        Command::MotorRun => commands::motor_run(&cfg, threads)?,
    };

    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io {
        path: cli.out.display().to_string(),
        message: e.to_string(),
    })?;
    for (name, contents) in &artifacts {
        write(&cli.out, name, contents)?;
    }
    write(&cli.out, "config.toml", &cfg.to_toml())?;
    let manifest = Manifest {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.sim.seed,
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        files: artifacts.iter().map(|(n, _)| *n).collect(),
        config: &cfg,
    };
    write(
        &cli.out,
        "manifest.json",
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = e.to_json();
            eprintln!("{body}");
            if std::fs::create_dir_all(&cli.out).is_ok() {
                let _ = std::fs::write(cli.out.join("error.json"), &body);
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
