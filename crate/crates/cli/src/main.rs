//! `lz2mode`: sweeps, scans, spectra, Husimi frames and squeezing series for
//! the two-mode Landau-Zener problem.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Method, Overrides};

#[derive(Parser, Debug)]
#[command(name = "lz2mode", version, about = "Two-mode bosonic Landau-Zener sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One sweep: P_LZ, final observables and a time series.
    Sweep(Common),
    /// Cartesian product of the scan axes, one CSV row per point.
    Scan(Common),
    /// Many-body spectrum against ε with mean-field stationary energies.
    Spectrum(Common),
    /// Husimi Q frames of the exact state at `husimi_times`.
    Husimi(Common),
    /// Number and spectroscopic squeezing along the sweep.
    Squeezing(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file, or `-` for stdin.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Worker threads (defaults to all cores).
    #[arg(long, env = "LZ_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set alpha=0.1` or `--set scan.g=[1,5]`.
    #[arg(long, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Sweep(c) => ("sweep", c),
        Command::Scan(c) => ("scan", c),
        Command::Spectrum(c) => ("spectrum", c),
        Command::Husimi(c) => ("husimi", c),
        Command::Squeezing(c) => ("squeezing", c),
    };
    let overrides = Overrides {
        method: common.method,
        workers: common.workers,
        seed: common.seed,
        out: common.out.clone(),
        set: common.set.clone(),
    };
    let config = match config::load(common.config.as_deref(), overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("lz2mode: config error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("lz2mode: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Sweep(_) => commands::sweep(&config),
        Command::Scan(_) => commands::scan(&config).map(|ok| eprintln!("lz2mode: {ok} scan points succeeded")),
        Command::Spectrum(_) => commands::spectrum(&config),
        Command::Husimi(_) => commands::husimi_frames(&config).map(|k| eprintln!("lz2mode: wrote {k} frames")),
        Command::Squeezing(_) => commands::squeezing(&config),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            commands::write_diagnostic(&config, name, &e);
            eprintln!("lz2mode: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
