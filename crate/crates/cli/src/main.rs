mod config;
mod error;
mod run;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{Config, Experiment, Overrides};
use error::CliError;

#[derive(Parser)]
#[command(name = "intermittency", version, about = "Experiments on random and sequential compositions of intermittent maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean Birkhoff averages
    Simulate(RunArgs),
    /// L1 decay of a density under the composed transfer operators
    Decay(RunArgs),
    /// Large-deviation probabilities (and optional moments)
    Ld(RunArgs),
    /// Moderate-deviation probabilities
    Md(RunArgs),
    /// Kolmogorov-Smirnov distance of normalised sums to a Gaussian
    Clt(RunArgs),
    /// Annealed variance from the correlation sum
    Variance(RunArgs),
    /// Quenched variance across independent realisations
    QuenchedVariance(RunArgs),
    /// Single-map means and drift of the uncentred sums
    Centering(RunArgs),
    /// Two-point product system
    Product(RunArgs),
    /// Invariant suites of every module
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment config; defaults apply to missing fields
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    grid_n: Option<usize>,
    /// CSV output; the sidecar goes next to it with a .json extension
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker count, 0 for one per core
    #[arg(long)]
    threads: Option<usize>,
    /// Record wall time in the CSV (rows are then no longer reproducible)
    #[arg(long)]
    wall_ms: bool,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[arg(long, default_value_t = intermittency::experiments::DEFAULT_GRID_N)]
    grid_n: usize,
    #[arg(long)]
    threads: Option<usize>,
}

fn init_pool(threads: usize) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Io(format!("worker pool: {e}")))
}

fn selftest(args: &SelftestArgs) -> Result<(), CliError> {
    init_pool(args.threads.unwrap_or(0))?;
    let results = intermittency::selftest::run_selftest(args.grid_n)?;
    println!("{:<18} {:<6} detail", "suite", "result");
    for r in &results {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        println!("{:<18} {:<6} {}", r.name, verdict, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::SelftestFailed(failed));
    }
    Ok(())
}

fn experiment(kind: Experiment, args: &RunArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let file = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let overrides = Overrides {
        seed: args.seed,
        samples: args.samples,
        grid_n: args.grid_n,
        out: args.out.clone(),
        threads: args.threads,
        wall_ms: args.wall_ms,
    };
    let cfg = file.resolve(kind, &overrides)?;
    init_pool(cfg.threads)?;

    let mut output = run::run(&cfg)?;
    let wall_ms = start.elapsed().as_millis() as u64;
    if cfg.wall_ms {
        for r in &mut output.rows {
            r.wall_ms = wall_ms;
        }
    }

    let out = cfg.out_path();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    intermittency::record::write_records(BufWriter::new(File::create(out)?), &output.rows)?;
    let sidecar = json!({
        "config": cfg,
        "summary": output.summary,
        "timings": { "wall_ms": wall_ms, "threads": rayon::current_num_threads() },
        "version": env!("CARGO_PKG_VERSION"),
    });
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(cfg.sidecar_path(), text)?;
    println!("wrote {} rows to {}", output.rows.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => experiment(Experiment::Simulate, a),
        Command::Decay(a) => experiment(Experiment::Decay, a),
        Command::Ld(a) => experiment(Experiment::Ld, a),
        Command::Md(a) => experiment(Experiment::Md, a),
        Command::Clt(a) => experiment(Experiment::Clt, a),
        Command::Variance(a) => experiment(Experiment::Variance, a),
        Command::QuenchedVariance(a) => experiment(Experiment::QuenchedVariance, a),
        Command::Centering(a) => experiment(Experiment::Centering, a),
        Command::Product(a) => experiment(Experiment::Product, a),
        Command::Selftest(a) => selftest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
