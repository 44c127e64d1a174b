mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use commands::{Outcome, Phases};
use config::Preset;
use error::CliError;
use output::{OutputDir, RunManifest};

/// Mollified stochastic quasi-geostrophic transport: simulation, numerical
/// certificates and paired uniqueness experiments.
#[derive(Parser, Debug)]
#[command(name = "msqg", version)]
struct Cli {
    /// TOML file merged over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "msqg-out")]
    out: PathBuf,
    /// Master seed, overriding `solver.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "MSQG_WORKERS")]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Run the stochastic ensemble and write ledgers and final fields.
    Simulate,
    /// Run the certificate checks listed under `[certify]`.
    Certify,
    /// Paired runs from perturbed data and the Grönwall fit.
    Uniqueness,
    /// Kernel route cross-check, error envelopes and heat-kernel bands.
    KernelsScan,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Certify => "certify",
            Command::Uniqueness => "uniqueness",
            Command::KernelsScan => "kernels-scan",
        }
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let start = Instant::now();
    let mut cfg = config::load(cli.config.as_deref(), cli.preset)?;
    if let Some(seed) = cli.seed {
        cfg.solver.seed = seed;
        cfg.initial.seed = seed;
    }
    let workers = cli.workers.or(cfg.workers);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Workers("need at least one worker".into()));
        }
        pool = pool.num_threads(w);
    }
    pool.build_global().map_err(|e| CliError::Workers(e.to_string()))?;

    let mut out = OutputDir::create(&cli.out)?;
    out.write_text("config.resolved.toml", &cfg.to_toml())?;
    let mut phases = Phases(Vec::new());
    let outcome = match cli.command {
        Command::Simulate => commands::simulate(&cfg, &mut out, &mut phases)?,
        Command::Certify => commands::certify(&cfg, &mut out, &mut phases)?,
        Command::Uniqueness => commands::uniqueness(&cfg, &mut out, &mut phases)?,
        Command::KernelsScan => commands::kernels_scan(&cfg, &mut out, &mut phases)?,
    };
    let (label, code) = match &outcome {
        Outcome::Success => ("pass".to_string(), 0),
        Outcome::CertificateFail(names) => (format!("fail: {}", names.join(", ")), 1),
        Outcome::NumericFailure(msg) => {
            eprintln!("error: {msg}");
            (format!("numeric failure: {msg}"), 3)
        }
    };
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        config_path: cli.config.clone(),
        output_dir: cli.out.clone(),
        seed: cfg.solver.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        workers: rayon::current_num_threads(),
        outcome: label,
        exit_code: code,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        timings: phases.0,
        artifacts: Vec::new(),
        config: cfg,
    };
    out.finish(manifest)?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
