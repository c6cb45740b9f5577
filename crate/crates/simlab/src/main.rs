//! Command-line driver for the simulation studies.
//!
//! Each subcommand resolves a configuration (defaults, then an optional TOML
//! file, then flags), runs the study, and writes CSV tables plus a JSON
//! metadata sidecar into the output directory. Exit codes: 0 on success,
//! 1 for configuration errors, 2 for runtime failures (including a blown
//! resampling budget).

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use simlab::experiments::prop1::{run_prop1, Prop1Params, StrategyKind};
use simlab::experiments::{
    coverage_coef, coverage_proj, power, stability, theorem1, RunArtifacts,
};
use simlab::table::{version_string, write_outputs};
use simlab::{ConfigPatch, Experiment, ExperimentConfig, Selector, SimError};

/// Fraction of replications that may be redrawn before the run is declared
/// unhealthy.
const RESAMPLE_BUDGET: f64 = 0.01;

#[derive(Parser)]
#[command(
    name = "simlab",
    about = "Monte Carlo studies of data splitting and additive randomisation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// True-positive rates of full-data, split, and randomised selection.
    Power(RunArgs),
    /// Selection stability across repeated splits and noise draws.
    Stability(RunArgs),
    /// Interval coverage for selected full-model coefficients.
    CoverageCoef(RunArgs),
    /// Interval coverage for projection parameters with p > n.
    CoverageProj(RunArgs),
    /// Conditional normality of the randomised pivot under skewed errors.
    Theorem1(RunArgs),
    /// Fisher-information comparison of randomisation against a fixed
    /// splitting strategy on one sampled design.
    Prop1(Prop1Args),
    /// Print the version stamp used in metadata sidecars.
    Version,
}

/// Flags shared by every experiment subcommand. Flags override the config
/// file, which overrides per-experiment defaults.
#[derive(Args)]
struct RunArgs {
    /// TOML file with the same keys as the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for the replication streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Replications (datasets for stability; per sample size for theorem1).
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory for tables and metadata.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results are identical for any worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Observations per replication.
    #[arg(long)]
    n: Option<usize>,
    /// Covariates.
    #[arg(long)]
    p: Option<usize>,
    /// Toeplitz design correlation.
    #[arg(long)]
    rho: Option<f64>,
    /// Fraction of sample information used for selection.
    #[arg(long)]
    f: Option<f64>,
    /// Selection algorithm.
    #[arg(long, value_enum)]
    selector: Option<Selector>,
    /// Knockoff FDR target.
    #[arg(long)]
    q: Option<f64>,
    /// Stability-selection per-family error bound.
    #[arg(long)]
    pfer: Option<f64>,
    /// Stability-selection frequency cutoff.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Interval miscoverage level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Stability-selection subsample count.
    #[arg(long)]
    b: Option<usize>,
}

impl RunArgs {
    fn patches(&self) -> Result<Vec<ConfigPatch>, SimError> {
        let mut patches = Vec::new();
        if let Some(path) = &self.config {
            patches.push(ConfigPatch::from_toml_file(path)?);
        }
        patches.push(ConfigPatch {
            experiment: None,
            n: self.n,
            p: self.p,
            rho: self.rho,
            f: self.f,
            selector: self.selector,
            n_reps: self.reps,
            alpha: self.alpha,
            seed: self.seed,
            knockoff_q: self.q,
            pfer: self.pfer,
            cutoff: self.cutoff,
            b: self.b,
            output_path: self.out.clone(),
            workers: self.workers,
        });
        Ok(patches)
    }

    fn resolve(&self, experiment: Experiment) -> Result<ExperimentConfig, SimError> {
        ExperimentConfig::resolve(experiment, &self.patches()?)
    }
}

/// Flags for the Fisher-information verification.
#[derive(Args)]
struct Prop1Args {
    /// Observations.
    #[arg(long, default_value_t = 40)]
    n: usize,
    /// Covariates.
    #[arg(long, default_value_t = 3)]
    p: usize,
    /// Toeplitz design correlation.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Selection fraction.
    #[arg(long, default_value_t = 0.5)]
    f: f64,
    /// Splitting strategy to compare against.
    #[arg(long, value_enum, default_value_t = StrategyKind::Simple)]
    strategy: StrategyKind,
    /// Monte Carlo draws when the splits cannot be enumerated.
    #[arg(long, default_value_t = 10_000)]
    mc: usize,
    /// Seed for the design draw and the split sampler.
    #[arg(long, default_value_t = 1203)]
    seed: u64,
    /// Output directory for the comparison table.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Power(args) => run_experiment(Experiment::Power, &args),
        Command::Stability(args) => run_experiment(Experiment::Stability, &args),
        Command::CoverageCoef(args) => run_experiment(Experiment::CoverageCoef, &args),
        Command::CoverageProj(args) => run_experiment(Experiment::CoverageProjection, &args),
        Command::Theorem1(args) => run_experiment(Experiment::Theorem1, &args),
        Command::Prop1(args) => run_prop1_command(&args),
        Command::Version => {
            println!("{}", version_string());
            return ExitCode::SUCCESS;
        }
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run_experiment(experiment: Experiment, args: &RunArgs) -> Result<ExitCode, SimError> {
    let cfg = args.resolve(experiment)?;
    eprintln!("running {} on cell {}", experiment, cfg.cell_id());
    let started = Instant::now();
    let artifacts: RunArtifacts = match experiment {
        Experiment::Power => power::run_power(&cfg)?.artifacts,
        Experiment::Stability => stability::run_stability(&cfg)?.artifacts,
        Experiment::CoverageCoef => coverage_coef::run_coverage_coef(&cfg)?.artifacts,
        Experiment::CoverageProjection => coverage_proj::run_coverage_projection(&cfg)?.artifacts,
        Experiment::Theorem1 => theorem1::run_theorem1(&cfg)?.artifacts,
    };
    let elapsed = started.elapsed().as_secs_f64();
    let meta = artifacts.meta(&cfg, elapsed);
    let written = write_outputs(&cfg.output_path, &artifacts.tables, &meta)?;
    for path in &written {
        println!("{}", path.display());
    }
    println!(
        "{} replications in {elapsed:.1}s, {} resampled ({:.2}%)",
        artifacts.n_reps,
        artifacts.resampled,
        100.0 * artifacts.resample_rate()
    );
    if artifacts.resample_rate() >= RESAMPLE_BUDGET {
        eprintln!(
            "error: resampling budget exceeded: {} of {} replications were redrawn",
            artifacts.resampled, artifacts.n_reps
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_prop1_command(args: &Prop1Args) -> Result<ExitCode, SimError> {
    let params = Prop1Params {
        n: args.n,
        p: args.p,
        rho: args.rho,
        f: args.f,
        strategy: args.strategy,
        n_mc: args.mc,
        seed: args.seed,
    };
    let out = run_prop1(&params)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("prop1.csv");
    std::fs::write(&path, out.table.to_csv())?;
    println!("{}", path.display());
    for row in &out.rows {
        let r = &row.report;
        let mode = if r.exhaustive {
            format!("exhaustive over {} splits", r.n_draws)
        } else {
            format!("{} Monte Carlo draws", r.n_draws)
        };
        println!(
            "{:>16}: selection margin {:+.6} (se {:.6}), inference margin {:+.6} (se {:.6}), {}{}",
            row.criterion,
            r.margin_sel,
            r.se_sel,
            r.margin_inf,
            r.se_inf,
            mode,
            if r.degenerate { ", degenerate" } else { "" }
        );
    }
    Ok(ExitCode::SUCCESS)
}
