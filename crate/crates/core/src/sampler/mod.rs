//! NUTS with windowed warmup, run over independent chains.

mod adapt;
pub mod diagnostics;
mod metric;
mod nuts;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Posterior;

pub use adapt::{init_stepsize, DualAveraging, MetricAdapter, WindowSchedule};
pub use diagnostics::{diagnose, ess, split_rhat, EssMode, ParamDiagnostics};
pub use metric::{Metric, MetricKind};
pub use nuts::{leapfrog, transition, DrawStats, Point, DIVERGENCE_THRESHOLD};

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_treedepth: u32,
    pub init_stepsize: f64,
    pub metric: MetricKind,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            samples: 1000,
            seed: 1,
            target_accept: 0.8,
            max_treedepth: 10,
            init_stepsize: 1.0,
            metric: MetricKind::Diag,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.warmup == 0 || self.samples == 0 {
            return Err(Error::Configuration("chains, warmup and samples must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Configuration("target_accept must lie in (0, 1)".into()));
        }
        if self.max_treedepth == 0 {
            return Err(Error::Configuration("max_treedepth must be at least 1".into()));
        }
        if !(self.init_stepsize > 0.0 && self.init_stepsize.is_finite()) {
            return Err(Error::Configuration("init_stepsize must be positive".into()));
        }
        Ok(())
    }
}

/// Seed of chain `chain`'s random stream: SplitMix64 of the run seed mixed
/// with the chain index.
pub fn chain_seed(seed: u64, chain: usize) -> u64 {
    splitmix64(seed ^ splitmix64(chain as u64 + 1))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Retained draws on the constrained scale, `[chain][iteration][parameter]`.
#[derive(Clone, Debug)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub chains: usize,
    pub samples: usize,
    pub dim: usize,
    values: Vec<f64>,
    pub stats: Vec<Vec<DrawStats>>,
    pub warmup_divergences: Vec<usize>,
    pub stepsizes: Vec<f64>,
    pub inv_metrics: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl PosteriorDraws {
    pub fn new(names: Vec<String>, chains: usize, samples: usize, values: Vec<f64>) -> Result<Self> {
        let dim = names.len();
        if values.len() != chains * samples * dim {
            return Err(Error::Dimension("draw array has the wrong size".into()));
        }
        Ok(Self {
            names,
            chains,
            samples,
            dim,
            values,
            stats: vec![Vec::new(); chains],
            warmup_divergences: vec![0; chains],
            stepsizes: vec![f64::NAN; chains],
            inv_metrics: vec![Vec::new(); chains],
            warnings: Vec::new(),
        })
    }

    pub fn draw(&self, chain: usize, iter: usize) -> &[f64] {
        let start = (chain * self.samples + iter) * self.dim;
        &self.values[start..start + self.dim]
    }

    /// All draws in chain-major order.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim.max(1))
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.samples
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Draws of one parameter split by chain.
    pub fn param_chains(&self, idx: usize) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| (0..self.samples).map(|s| self.draw(c, s)[idx]).collect())
            .collect()
    }

    pub fn divergences(&self) -> usize {
        self.stats.iter().flatten().filter(|s| s.divergent).count()
    }

    pub fn mean_accept_stat(&self) -> f64 {
        let all: Vec<f64> = self.stats.iter().flatten().map(|s| s.accept_stat).collect();
        crate::stats::mean(&all)
    }

    pub fn diagnostics(&self) -> Vec<ParamDiagnostics> {
        (0..self.dim).map(|i| diagnose(&self.param_chains(i))).collect()
    }

    /// Copy keeping only the listed parameters.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.total_draws() * indices.len());
        for d in self.iter_draws() {
            values.extend(indices.iter().map(|&i| d[i]));
        }
        Self {
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
            dim: indices.len(),
            values,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            names: Vec::new(),
            chains: self.chains,
            samples: self.samples,
            dim: 0,
            values: Vec::new(),
            stats: self.stats.clone(),
            warmup_divergences: self.warmup_divergences.clone(),
            stepsizes: self.stepsizes.clone(),
            inv_metrics: self.inv_metrics.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Output of one chain.
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub draws: Vec<f64>,
    pub stats: Vec<DrawStats>,
    pub warmup_divergences: usize,
    pub stepsize: f64,
    /// Diagonal of the adapted inverse metric.
    pub inv_metric: Vec<f64>,
}

fn find_initial_point<T: Posterior + ?Sized>(target: &T, rng: &mut ChaCha8Rng) -> Result<Point> {
    let mut last = None;
    for _ in 0..100 {
        let q = target.initial_point(rng);
        match Point::new(target, q) {
            Ok(z) => return Ok(z),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Initialization(format!(
        "no finite starting point after 100 attempts: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Runs chain `chain` from its own seeded stream.
pub fn run_chain<T: Posterior + ?Sized>(target: &T, config: &SamplerConfig, chain: usize) -> Result<ChainRun> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(chain_seed(config.seed, chain));
    let dim = target.dim();
    let mut z = find_initial_point(target, &mut rng)?;
    run_chain_from(target, config, &mut z, &mut rng, dim)
}

/// Runs a chain from an explicit unconstrained starting point.
pub fn run_chain_at<T: Posterior + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    chain: usize,
    q0: Vec<f64>,
) -> Result<ChainRun> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(chain_seed(config.seed, chain));
    let dim = target.dim();
    let mut z = Point::new(target, q0)?;
    run_chain_from(target, config, &mut z, &mut rng, dim)
}

fn run_chain_from<T: Posterior + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    z: &mut Point,
    rng: &mut ChaCha8Rng,
    dim: usize,
) -> Result<ChainRun> {
    let mut metric = Metric::unit(config.metric, dim);
    let mut eps = init_stepsize(target, z, config.init_stepsize, &metric, rng)?;
    let mut da = DualAveraging::new(config.target_accept, eps);
    let mut adapter = MetricAdapter::new(config.warmup, dim, config.metric);
    let mut warmup_div = 0;

    for _ in 0..config.warmup {
        let (next, stats) = transition(target, z, eps, &metric, config.max_treedepth, rng);
        *z = next;
        if stats.divergent {
            warmup_div += 1;
        }
        eps = da.update(stats.accept_stat);
        if let Some(m) = adapter.learn(&z.q)? {
            metric = m;
            eps = init_stepsize(target, z, eps, &metric, rng)?;
            da.restart(eps);
        }
    }
    if warmup_div == config.warmup {
        return Err(Error::FitFailure("every warmup transition diverged".into()));
    }
    eps = da.final_stepsize();
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::FitFailure("adapted step size is not finite".into()));
    }

    let mut draws = Vec::with_capacity(config.samples * dim);
    let mut all_stats = Vec::with_capacity(config.samples);
    for _ in 0..config.samples {
        let (next, stats) = transition(target, z, eps, &metric, config.max_treedepth, rng);
        *z = next;
        draws.extend(target.constrain(&z.q)?);
        all_stats.push(stats);
    }
    Ok(ChainRun {
        draws,
        stats: all_stats,
        warmup_divergences: warmup_div,
        stepsize: eps,
        inv_metric: metric.diagonal(),
    })
}

/// Runs `config.chains` chains on the current rayon pool and collects
/// constrained draws. Chain `c` depends only on `(config.seed, c)`.
pub fn run_chains<T: Posterior + ?Sized>(target: &T, config: &SamplerConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    let runs: Vec<Result<ChainRun>> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(target, config, c))
        .collect();
    assemble(target, config, runs)
}

/// As [`run_chains`] with per-chain starting points.
pub fn run_chains_at<T: Posterior + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    starts: Vec<Vec<f64>>,
) -> Result<PosteriorDraws> {
    config.validate()?;
    if starts.len() != config.chains {
        return Err(Error::Configuration("one starting point per chain required".into()));
    }
    let runs: Vec<Result<ChainRun>> = starts
        .into_par_iter()
        .enumerate()
        .map(|(c, q)| run_chain_at(target, config, c, q))
        .collect();
    assemble(target, config, runs)
}

fn assemble<T: Posterior + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    runs: Vec<Result<ChainRun>>,
) -> Result<PosteriorDraws> {
    let mut values = Vec::with_capacity(config.chains * config.samples * target.dim());
    let mut chains = Vec::with_capacity(runs.len());
    for r in runs {
        let r = r?;
        values.extend_from_slice(&r.draws);
        chains.push(r);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::FitFailure("NaN in retained draws".into()));
    }
    let mut out = PosteriorDraws::new(target.layout().names(), config.chains, config.samples, values)?;
    for (c, r) in chains.into_iter().enumerate() {
        out.stats[c] = r.stats;
        out.warmup_divergences[c] = r.warmup_divergences;
        out.stepsizes[c] = r.stepsize;
        out.inv_metrics[c] = r.inv_metric;
    }
    let div = out.divergences();
    if div as f64 > 0.1 * out.total_draws() as f64 {
        let msg = format!("{div} of {} post-warmup transitions diverged", out.total_draws());
        warn!("{msg}");
        out.warnings.push(msg);
    }
    Ok(out)
}
