//! `bosim`: configuration-driven experiment runner.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::bad;
use crate::run::{Run, RunError};

#[derive(Parser)]
#[command(name = "bosim", version, about = "Many-body interference experiments for multi-species bosons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-particle interference after a beam splitter.
    Hom(Common),
    /// Expectation-value traces.
    Evolve(Common),
    /// Excess fluctuation vs degree of indistinguishability.
    FiScan(Common),
    /// Renormalized probe-particle counting.
    Probe(Common),
    /// Block-resolved spectra along J = (1−η)J0, U = ηJ0.
    SpectrumSweep(Common),
    /// Fourier spectra and peaks of traces.
    Dft(Common),
    /// Spectra per symmetry block.
    Blocks(Common),
    /// Weights of states in each symmetry block.
    Weights(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment file (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Hom(c) => ("hom", c),
            Command::Evolve(c) => ("evolve", c),
            Command::FiScan(c) => ("fi-scan", c),
            Command::Probe(c) => ("probe", c),
            Command::SpectrumSweep(c) => ("spectrum-sweep", c),
            Command::Dft(c) => ("dft", c),
            Command::Blocks(c) => ("blocks", c),
            Command::Weights(c) => ("weights", c),
        }
    }
}

fn execute(name: &str, common: &Common) -> Run<PathBuf> {
    let start = Instant::now();
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| RunError::Config(bad("", format!("cannot read {}: {e}", common.config.display()))))?;
    let cfg = config::parse(&common.config, &text)?;
    if let Some(kind) = &cfg.kind {
        if kind != name {
            return Err(bad("kind", format!("config is for '{kind}', not '{name}'")).into());
        }
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed = common.seed.or(cfg.seed).unwrap_or(0);
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(bad("--threads", "must be at least 1").into());
        }
        // a second initialisation in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let artifacts = match name {
        "hom" => run::hom(&cfg)?,
        "evolve" => run::evolve(&cfg)?,
        "fi-scan" => run::fi_scan(&cfg, seed)?,
        "probe" => run::probe(&cfg)?,
        "spectrum-sweep" => run::sweep(&cfg)?,
        "dft" => run::dft(&cfg)?,
        "blocks" => run::blocks(&cfg)?,
        "weights" => run::weights(&cfg)?,
        _ => unreachable!("subcommands are fixed"),
    };
    let manifest = output::Manifest {
        command: name.to_string(),
        config: common.config.display().to_string(),
        config_sha256: output::sha256_hex(text.as_bytes()),
        bosim_version: env!("CARGO_PKG_VERSION").to_string(),
        core_version: bosim_core::VERSION.to_string(),
        seed,
        threads: rayon::current_num_threads(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: artifacts.iter().map(|a| a.name.clone()).collect(),
    };
    output::write_all(&out, &artifacts, &manifest)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = cli.command.parts();
    match execute(name, common) {
        Ok(out) => {
            eprintln!("bosim {name}: wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bosim {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
