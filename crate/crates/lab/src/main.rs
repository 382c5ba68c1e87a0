use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbm_core::lattice::min_scale;
use rbm_core::model::{skew_check, validate_assumption};
use rbm_core::simulate::{path_rng, stationary_histogram, HistogramGridSpec};
use rbm_lab::config::ExperimentConfig;
use rbm_lab::ensemble::THREADS_ENV;
use rbm_lab::error::{LabError, Result};
use rbm_lab::report::fmt_num;
use rbm_lab::run::{dump_chain, render_artifacts, run_experiment, RunOptions};
use rbm_lab::verify::{chains_for, nearest_site};

#[derive(Parser)]
#[command(name = "rbm", version, about = "Lattice approximations of reflected Brownian motion and their verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model assumptions of a config.
    Validate(Common),
    /// Write every jump of the primal and dual chains as CSV.
    DumpChain {
        #[command(flatten)]
        common: Common,
        /// Scale; defaults to the largest in the config's n-list.
        #[arg(long)]
        n: Option<u64>,
        /// Output file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured tests and write the artifact directory.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = THREADS_ENV)]
        threads: Option<usize>,
        /// Artifact directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Occupation-time histogram of the primal chain as CSV.
    Stationary {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Recorded run length after burn-in.
        #[arg(long, default_value_t = 5e4)]
        t_run: f64,
        /// Burn-in; defaults to 0.2·t_run.
        #[arg(long)]
        burn: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the text report of an artifact directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| LabError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn validate(common: &Common) -> Result<i32> {
    let cfg = ExperimentConfig::load(&common.config)?;
    let spec = cfg.rbm_spec()?;
    let rep = validate_assumption(&spec);
    for c in &rep.checks {
        println!("{:<20} {:<4} {}", c.name, if c.passed { "ok" } else { "FAIL" }, c.witness);
    }
    if rep.passed() {
        println!("minimum scale n: {}", min_scale(&spec)?);
        match skew_check(&spec)? {
            Some(rbm_core::InvariantDensity::ProductExponential { eta, .. }) => {
                let eta: Vec<String> = eta.iter().map(|v| fmt_num(*v)).collect();
                println!("skew-symmetric: yes, eta = [{}]", eta.join(", "));
            }
            _ => println!("skew-symmetric: no"),
        }
    }
    Ok(if rep.passed() { 0 } else { 1 })
}

fn stationary(
    common: &Common,
    n: Option<u64>,
    seed: Option<u64>,
    t_run: f64,
    burn: Option<f64>,
    out: Option<&PathBuf>,
) -> Result<i32> {
    let cfg = ExperimentConfig::load(&common.config)?;
    let n = n.unwrap_or_else(|| cfg.default_n());
    let chains = chains_for(&cfg.rbm_spec()?, n, cfg.lattice.k, cfg.constants()?)?;
    let chain = &chains.primal;
    let d = chain.dim();
    let start = nearest_site(chain, &vec![0.0; d]);
    let burn = burn.unwrap_or(0.2 * t_run);
    let mut rng = path_rng(seed.unwrap_or(cfg.run.seed), 0);
    let (hist, diag) = stationary_histogram(chain, start, burn, t_run, HistogramGridSpec::default(), &mut rng)?;
    let mut csv = String::new();
    for i in 0..d {
        let _ = write!(csv, "x{i},");
    }
    csv.push_str("density,occupation\n");
    for (cell, (v, occ)) in hist.values.iter().zip(&hist.occupation).enumerate() {
        let mut rest = cell;
        for _ in 0..d {
            let _ = write!(csv, "{},", fmt_num((rest % hist.grid.cells) as f64 * chain.h()));
            rest /= hist.grid.cells;
        }
        let _ = writeln!(csv, "{},{}", fmt_num(*v), fmt_num(*occ));
    }
    emit(out, &csv)?;
    eprintln!(
        "recorded time {}, clamped mass {}, empty interior cells {}",
        fmt_num(diag.recorded_time),
        fmt_num(diag.clamped_mass),
        diag.empty_cells
    );
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Validate(common) => validate(&common),
        Command::DumpChain { common, n, out } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            let n = n.unwrap_or_else(|| cfg.default_n());
            emit(out.as_ref(), &dump_chain(&cfg, n)?)?;
            Ok(0)
        }
        Command::Run { common, seed, threads, out } => {
            let outcome = run_experiment(&common.config, &RunOptions { seed, threads, out })?;
            print!("{}", outcome.summary.to_text(&outcome.reports));
            println!("artifacts: {}", outcome.out_dir.display());
            Ok(outcome.exit_code())
        }
        Command::Stationary { common, n, seed, t_run, burn, out } => {
            stationary(&common, n, seed, t_run, burn, out.as_ref())
        }
        Command::Report { out } => {
            let (text, passed) = render_artifacts(&out)?;
            print!("{text}");
            Ok(if passed { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
