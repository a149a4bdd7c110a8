//! Command-line front end for the `lowfr` library.
//!
//! Every command resolves its settings from defaults, an optional
//! `--config` file and flags (in increasing precedence), runs inside a
//! worker pool of `--jobs` threads (default: `LOWFR_JOBS`, else all cores)
//! and writes `config.resolved` next to its outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{KeySpec, RunConfig};
use crate::error::{CliError, CliResult};

pub const JOBS_ENV: &str = "LOWFR_JOBS";

#[derive(Parser, Debug)]
#[command(name = "lowfr", version, about = "Longitudinal factor regression for exposure mixtures")]
struct Cli {
    /// `key = value` config file with `[section]` headers; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a simulated dataset and its true coefficients.
    Simulate(SimulateArgs),
    /// Fit a model and write draws, diagnostics and induced coefficients.
    Fit(FitArgs),
    /// Summarize main, interaction, cumulative and group effects of a fit.
    Effects(EffectsArgs),
    /// Posterior predictive check of a LowFR fit.
    Ppc(PpcArgs),
    /// K-fold cross-validation using a fit's settings.
    Crossval(CrossvalArgs),
    /// Repeated simulate → fit → score runs.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug, Default)]
struct SamplerArgs {
    #[arg(long)]
    chains: Option<String>,
    #[arg(long)]
    warmup: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    target_accept: Option<String>,
    #[arg(long)]
    max_treedepth: Option<String>,
    /// `diag` or `dense`.
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// intro1, intro2, s1, s2 or s3.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n: Option<String>,
    /// Fraction of exposure cells to mask at random.
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    data: Option<String>,
    /// lowfr, cqr or direct.
    #[arg(long)]
    model: Option<String>,
    /// Rank of the direct model, or `full`.
    #[arg(long)]
    rank: Option<String>,
    /// Factors per time, or `auto`.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    sex_col: Option<String>,
    #[arg(long)]
    sex_interactions: bool,
    /// Center and scale y and each exposure column before fitting.
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    out: Option<String>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args, Debug)]
struct EffectsArgs {
    #[arg(long)]
    fit: Option<String>,
    /// Group definitions: `label = exposure, exposure [@ t, t]` per line.
    #[arg(long)]
    groups: Option<String>,
    /// `<exposure>_<t>,...;<exposure>_<t>,...`.
    #[arg(long)]
    surface: Option<String>,
    /// `lo:hi:step`.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Include the intercept in surface values.
    #[arg(long)]
    intercept: bool,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct PpcArgs {
    #[arg(long)]
    fit: Option<String>,
    /// per_subject or marginal.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct CrossvalArgs {
    #[arg(long)]
    fit: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    /// Comma-separated subset of lowfr, cqr, direct.
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

type Overrides = Vec<(&'static str, &'static str, Option<String>)>;

fn sampler_overrides(s: SamplerArgs) -> Overrides {
    vec![
        ("sampler", "chains", s.chains),
        ("sampler", "warmup", s.warmup),
        ("sampler", "samples", s.samples),
        ("sampler", "target_accept", s.target_accept),
        ("sampler", "max_treedepth", s.max_treedepth),
        ("sampler", "metric", s.metric),
    ]
}

fn bool_flag(on: bool) -> Option<String> {
    on.then(|| "true".to_string())
}

fn resolve(command: &str, schema: &[KeySpec], file: Option<&PathBuf>, jobs: Option<String>, flags: Overrides) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::new(command, schema);
    if let Ok(j) = std::env::var(JOBS_ENV) {
        cfg.set("run", "jobs", j);
    }
    if let Some(path) = file {
        cfg.apply_file(path)?;
    }
    for (section, key, value) in flags {
        if let Some(v) = value {
            cfg.set(section, key, v);
        }
    }
    if let Some(j) = jobs {
        cfg.set("run", "jobs", j);
    }
    Ok(cfg)
}

fn worker_count(cfg: &RunConfig) -> CliResult<usize> {
    match cfg.parse_opt::<usize>("run", "jobs")? {
        Some(0) => Err(CliError::usage("jobs must be at least 1")),
        Some(j) => Ok(j),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    use crate::commands as c;
    let file = cli.config.as_ref();
    let (mut cfg, run): (RunConfig, fn(&mut RunConfig) -> CliResult<()>) = match cli.command {
        Command::Simulate(a) => (
            resolve(
                "simulate",
                &c::simulate_schema(),
                file,
                cli.jobs,
                vec![
                    ("simulate", "scenario", a.scenario),
                    ("simulate", "seed", a.seed),
                    ("simulate", "n", a.n),
                    ("simulate", "mask", a.mask),
                    ("simulate", "out", a.out),
                ],
            )?,
            |cfg| c::simulate(cfg),
        ),
        Command::Fit(a) => {
            let mut flags = vec![
                ("fit", "data", a.data),
                ("fit", "model", a.model),
                ("fit", "rank", a.rank),
                ("fit", "k", a.k),
                ("sampler", "seed", a.seed),
                ("fit", "sex_col", a.sex_col),
                ("fit", "sex_interactions", bool_flag(a.sex_interactions)),
                ("fit", "standardize", bool_flag(a.standardize)),
                ("fit", "out", a.out),
            ];
            flags.extend(sampler_overrides(a.sampler));
            (resolve("fit", &c::fit_schema(), file, cli.jobs, flags)?, c::fit_cmd)
        }
        Command::Effects(a) => (
            resolve(
                "effects",
                &c::effects_schema(),
                file,
                cli.jobs,
                vec![
                    ("effects", "fit", a.fit),
                    ("effects", "groups", a.groups),
                    ("effects", "surface", a.surface),
                    ("effects", "grid", a.grid),
                    ("effects", "intercept", bool_flag(a.intercept)),
                    ("effects", "out", a.out),
                ],
            )?,
            |cfg| c::effects_cmd(cfg),
        ),
        Command::Ppc(a) => (
            resolve(
                "ppc",
                &c::ppc_schema(),
                file,
                cli.jobs,
                vec![
                    ("ppc", "fit", a.fit),
                    ("ppc", "mode", a.mode),
                    ("ppc", "seed", a.seed),
                    ("ppc", "out", a.out),
                ],
            )?,
            |cfg| c::ppc_cmd(cfg),
        ),
        Command::Crossval(a) => (
            resolve(
                "crossval",
                &c::crossval_schema(),
                file,
                cli.jobs,
                vec![
                    ("crossval", "fit", a.fit),
                    ("crossval", "folds", a.folds),
                    ("crossval", "seed", a.seed),
                    ("crossval", "out", a.out),
                ],
            )?,
            |cfg| c::crossval_cmd(cfg),
        ),
        Command::Benchmark(a) => {
            let mut flags = vec![
                ("benchmark", "scenario", a.scenario),
                ("benchmark", "reps", a.reps),
                ("benchmark", "models", a.models),
                ("benchmark", "seed", a.seed),
                ("benchmark", "n", a.n),
                ("benchmark", "mask", a.mask),
                ("benchmark", "k", a.k),
                ("benchmark", "rank", a.rank),
                ("benchmark", "out", a.out),
            ];
            flags.extend(sampler_overrides(a.sampler));
            (resolve("benchmark", &c::benchmark_schema(), file, cli.jobs, flags)?, |cfg| {
                c::benchmark_cmd(cfg)
            })
        }
    };
    let jobs = worker_count(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Inference(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run(&mut cfg))
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lowfr: {e}");
            e.exit_code()
        }
    }
}
