use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hidden_cli::commands::{cmd_ift, cmd_observe, cmd_sample, cmd_steady, cmd_sweep, CliError, Options};
use hidden_cli::config::{RunConfig, Threads};

/// Quantum-jump trajectories and hidden entropy production of the
/// two-qubit demon.
#[derive(Parser, Debug)]
#[command(name = "hident", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `run.threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Treat every jump channel as visible.
    #[arg(long, global = true)]
    all_visible: bool,
    /// Overrides `run.output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 3 when the statistical check fails.
    #[arg(long, global = true)]
    check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steady-state basis populations.
    Steady,
    /// Sample trajectories and write their entropy ledger.
    Sample,
    /// Repeat `sample` over the `[sweep]` grid.
    Sweep,
    /// Conditioned demon state along a given visible record.
    Observe {
        /// e.g. "g0; 4@0.9; 1@1.5; 4@2.4; e1; T=3"
        #[arg(long)]
        trajectory: String,
        /// Also render series.svg.
        #[arg(long)]
        svg: bool,
    },
    /// Integral fluctuation theorem estimates only.
    Ift,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(n) = cli.threads {
        cfg.run.threads = if n == 0 { Threads::Auto } else { Threads::Count(n) };
    }
    let dir = cli.out.clone().unwrap_or_else(|| cfg.run.output_dir.clone());
    let opts = Options {
        all_visible: cli.all_visible,
        check: cli.check,
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::Steady => cmd_steady(&cfg, &opts, &dir, &mut out),
        Command::Sample => cmd_sample(&cfg, &opts, &dir, &mut out),
        Command::Sweep => cmd_sweep(&cfg, &opts, &dir, &mut out),
        Command::Observe { trajectory, svg } => cmd_observe(&cfg, &opts, trajectory, *svg, &dir, &mut out),
        Command::Ift => cmd_ift(&cfg, &opts, &dir, &mut out),
    };
    let _ = out.flush();
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // messages already embed their causes
            eprintln!("hident: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
