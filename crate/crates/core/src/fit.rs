//! End-to-end model fitting: data → posterior draws → per-draw regression
//! coefficients on the `x` scale.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cqr::{CqrModel, CqrTerm};
use crate::data::ExposureDataset;
use crate::error::{Error, Result};
use crate::induced::{induced_draws, upper_pairs, InducedCoefficients};
use crate::model::{
    layout_for, select_k, DirectModel, DirectRank, LowFrModel, ModelSpec, ParamLayout, Posterior,
    Variant,
};
use crate::sampler::{run_chains, splitmix64, PosteriorDraws, SamplerConfig};
use crate::stats::mean;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    LowFr,
    Cqr,
    Direct,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LowFr => "lowfr",
            ModelKind::Cqr => "cqr",
            ModelKind::Direct => "direct",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowfr" => Ok(ModelKind::LowFr),
            "cqr" => Ok(ModelKind::Cqr),
            "direct" => Ok(ModelKind::Direct),
            _ => Err(Error::Usage(format!("unknown model `{s}` (expected lowfr, cqr or direct)"))),
        }
    }
}

/// Number of factors per time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KChoice {
    /// Smallest `k` whose singular values carry over 90% of the total.
    Auto,
    Fixed(usize),
}

impl fmt::Display for KChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KChoice::Auto => f.write_str("auto"),
            KChoice::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for KChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(KChoice::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(KChoice::Fixed(k)),
            _ => Err(Error::Usage(format!("--k must be `auto` or a positive integer, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub model: ModelKind,
    pub k: KChoice,
    /// Rank of the direct model; `None` fits an unrestricted `θ`.
    pub rank: Option<usize>,
    /// Covariate coded 0/1 used for sex interactions.
    pub sex_col: Option<String>,
    pub sex_interactions: bool,
    pub sampler: SamplerConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::LowFr,
            k: KChoice::Auto,
            rank: None,
            sex_col: None,
            sex_interactions: false,
            sampler: SamplerConfig::default(),
        }
    }
}

/// Posterior draws plus the regression of `y` on `x` implied by each draw.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub kind: ModelKind,
    /// Present for LowFR and direct fits.
    pub spec: Option<ModelSpec>,
    pub layout: ParamLayout,
    pub draws: PosteriorDraws,
    /// One entry per retained draw, chain-major.
    pub coefficients: Vec<InducedCoefficients<f64>>,
    /// Covariate effects per draw.
    pub covariate_effects: Vec<Vec<f64>>,
    pub p: usize,
    pub times: usize,
    pub exposure_names: Vec<String>,
    pub covariate_names: Vec<String>,
    /// Flat `x` positions of imputed entries, in `x_missing` order.
    pub missing_positions: Vec<usize>,
}

/// Posterior summary of one imputed exposure value.
#[derive(Clone, Debug, PartialEq)]
pub struct ImputedCell {
    pub position: usize,
    pub subject: usize,
    pub column: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn choose_k(data: &ExposureDataset, k: KChoice) -> Result<usize> {
    let k = match k {
        KChoice::Fixed(k) => k,
        KChoice::Auto => select_k(data)?,
    };
    if k == 0 || k > data.p() {
        return Err(Error::Configuration(format!("k = {k} must lie in 1..={}", data.p())));
    }
    Ok(k)
}

fn variant_for(data: &ExposureDataset, config: &FitConfig) -> Result<Variant> {
    match config.model {
        ModelKind::LowFr if config.sex_interactions => {
            let name = config
                .sex_col
                .as_deref()
                .ok_or_else(|| Error::Configuration("sex interactions need --sex-col".into()))?;
            let sex_col = data
                .covariate_index(name)
                .ok_or_else(|| Error::Configuration(format!("no covariate named `{name}`")))?;
            Ok(Variant::LowFrSexInt { sex_col })
        }
        ModelKind::LowFr => Ok(Variant::LowFr),
        ModelKind::Direct => Ok(Variant::Direct(match config.rank {
            Some(r) => DirectRank::Rank(r),
            None => DirectRank::Full,
        })),
        ModelKind::Cqr => Err(Error::Usage("CQR has no model spec".into())),
    }
}

pub fn fit(data: &ExposureDataset, config: &FitConfig) -> Result<FitResult> {
    config.sampler.validate()?;
    let base = |kind, spec, layout: ParamLayout, draws: PosteriorDraws, coefficients, covariate_effects, missing| {
        FitResult {
            kind,
            spec,
            layout,
            draws,
            coefficients,
            covariate_effects,
            p: data.p(),
            times: data.times(),
            exposure_names: data.exposure_names().to_vec(),
            covariate_names: data.covariate_names().to_vec(),
            missing_positions: missing,
        }
    };
    match config.model {
        ModelKind::LowFr => {
            let k = choose_k(data, config.k)?;
            let spec = ModelSpec::for_data(data, k, variant_for(data, config)?)?;
            let model = LowFrModel::new(spec.clone(), data)?;
            let draws = run_chains(&model, &config.sampler)?;
            let layout = model.layout().clone();
            let coefficients = induced_draws(&spec, &layout, draws.iter_draws())?;
            let cov = block_draws(&draws, &layout, "cov");
            Ok(base(
                ModelKind::LowFr,
                Some(spec),
                layout,
                draws,
                coefficients,
                cov,
                data.missing_positions(),
            ))
        }
        ModelKind::Direct => {
            let spec = ModelSpec::for_data(data, 1, variant_for(data, config)?)?;
            let model = DirectModel::new(spec.clone(), data)?;
            let draws = run_chains(&model, &config.sampler)?;
            let layout = layout_for(&spec);
            let w = data.width();
            let coefficients = draws
                .iter_draws()
                .map(|d| {
                    Ok(InducedCoefficients {
                        alpha0: d[0],
                        alpha: model.theta(d)?,
                        gamma: crate::linalg::DenseMatrix::zeros(w, w),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let cov = block_draws(&draws, &layout, "cov");
            Ok(base(ModelKind::Direct, Some(spec), layout, draws, coefficients, cov, Vec::new()))
        }
        ModelKind::Cqr => {
            if data.has_missing() {
                return Err(Error::Configuration("CQR needs complete exposures; impute first".into()));
            }
            let model = CqrModel::new(data)?;
            let draws = run_chains(&model, &config.sampler)?;
            let layout = model.layout().clone();
            let coefficients = draws
                .iter_draws()
                .map(|d| cqr_coefficients(&model, d, data.p(), data.times()))
                .collect();
            let cov = block_draws(&draws, &layout, "cov");
            Ok(base(ModelKind::Cqr, None, layout, draws, coefficients, cov, Vec::new()))
        }
    }
}

fn block_draws(draws: &PosteriorDraws, layout: &ParamLayout, name: &str) -> Vec<Vec<f64>> {
    let r = layout.range(name).unwrap_or(0..0);
    draws.iter_draws().map(|d| d[r.clone()].to_vec()).collect()
}

/// CQR coefficients as a symmetric quadratic form: the product term
/// `γ x_a x_b` contributes `γ/2` to `Γ_ab` and `Γ_ba`.
pub fn cqr_coefficients(model: &CqrModel, draw: &[f64], p: usize, times: usize) -> InducedCoefficients<f64> {
    let w = p * times;
    let mut out = InducedCoefficients::zero(w);
    out.alpha0 = draw[0];
    for (term, &c) in model.design().terms.iter().zip(model.coefficients(draw)) {
        match *term {
            CqrTerm::Main { j, t } => out.alpha[j * times + t] = c,
            CqrTerm::Int { j1, j2, t1, t2 } => {
                let (a, b) = (j1 * times + t1, j2 * times + t2);
                if a == b {
                    out.gamma[(a, a)] += c;
                } else {
                    out.gamma[(a, b)] += 0.5 * c;
                    out.gamma[(b, a)] += 0.5 * c;
                }
            }
        }
    }
    out
}

impl FitResult {
    /// Column names of [`FitResult::coefficient_draws`]: `alpha0`, then
    /// `alpha[x]` per column of `x`, then `gamma[a,b]` over the upper
    /// triangle.
    pub fn coefficient_names(&self) -> Vec<String> {
        let label = |c: usize| format!("{}_{}", self.exposure_names[c / self.times], c % self.times + 1);
        let w = self.p * self.times;
        let mut names = vec!["alpha0".to_string()];
        names.extend((0..w).map(|c| format!("alpha[{}]", label(c))));
        names.extend(upper_pairs(w).into_iter().map(|(a, b)| format!("gamma[{},{}]", label(a), label(b))));
        names
    }

    /// Coefficient draws arranged like posterior draws, for diagnostics and
    /// persistence.
    pub fn coefficient_draws(&self) -> Result<PosteriorDraws> {
        let mut values = Vec::new();
        for c in &self.coefficients {
            values.push(c.alpha0);
            values.extend_from_slice(&c.alpha);
            values.extend(c.gamma_upper());
        }
        PosteriorDraws::new(self.coefficient_names(), self.draws.chains, self.draws.samples, values)
    }

    /// Posterior mean of `E[y | x, z]`.
    pub fn predict_mean(&self, x: &[f64], z: &[f64]) -> f64 {
        let per: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.covariate_effects)
            .map(|(c, cov)| c.mean_at(x) + cov.iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        mean(&per)
    }

    /// Posterior-mean predictions for every subject; masked exposures are
    /// replaced by `fill` (e.g. training column means).
    pub fn predict_dataset(&self, data: &ExposureDataset, fill: &[f64]) -> Vec<f64> {
        (0..data.n())
            .map(|i| {
                let x: Vec<f64> = data
                    .x_row(i)
                    .iter()
                    .zip(data.missing_row(i))
                    .enumerate()
                    .map(|(c, (&v, &m))| if m { fill[c] } else { v })
                    .collect();
                self.predict_mean(&x, data.z_row(i))
            })
            .collect()
    }

    /// 95% equal-tailed intervals of the imputed exposures.
    pub fn imputed(&self) -> Vec<ImputedCell> {
        let Some(r) = self.layout.range("x_missing") else {
            return Vec::new();
        };
        let w = self.p * self.times;
        self.missing_positions
            .iter()
            .zip(r)
            .map(|(&pos, idx)| {
                let mut v: Vec<f64> = self.draws.iter_draws().map(|d| d[idx]).collect();
                v.sort_by(f64::total_cmp);
                ImputedCell {
                    position: pos,
                    subject: pos / w,
                    column: pos % w,
                    mean: mean(&v),
                    lower: crate::stats::quantile_sorted(&v, 0.025),
                    upper: crate::stats::quantile_sorted(&v, 0.975),
                }
            })
            .collect()
    }
}

/// Fold of each subject: a seeded shuffle dealt round-robin into `folds`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Configuration("cross-validation needs at least 2 folds".into()));
    }
    if n < 2 * folds {
        return Err(Error::Configuration(format!(
            "{n} subjects cannot fill {folds} folds with at least 2 points each"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x666f_6c64)));
    let mut out = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos % folds;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<usize>,
    /// Held-out prediction per subject.
    pub predictions: Vec<f64>,
    /// Pooled out-of-sample MSE.
    pub mse: f64,
    pub fold_mse: Vec<f64>,
}

/// K-fold cross-validation. Fold `f` is fitted with sampler seed
/// `splitmix64(seed ^ f)`; held-out subjects are predicted by the posterior
/// mean of `E[y | x, z]`, with masked exposures set to training means.
pub fn crossval(data: &ExposureDataset, config: &FitConfig, folds: usize, seed: u64) -> Result<CrossValidation> {
    let assign = fold_assignment(data.n(), folds, seed)?;
    let mut predictions = vec![f64::NAN; data.n()];
    let mut fold_mse = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<usize> = (0..data.n()).filter(|&i| assign[i] != f).collect();
        let test: Vec<usize> = (0..data.n()).filter(|&i| assign[i] == f).collect();
        let train_data = data.subset(&train);
        let test_data = data.subset(&test);
        let mut cfg = config.clone();
        cfg.sampler.seed = splitmix64(config.sampler.seed ^ f as u64);
        let fitted = fit(&train_data, &cfg)?;
        let fill = train_data.column_means();
        let pred = fitted.predict_dataset(&test_data, &fill);
        let mut se = 0.0;
        for (&i, &yhat) in test.iter().zip(&pred) {
            predictions[i] = yhat;
            se += (data.y()[i] - yhat).powi(2);
        }
        fold_mse.push(se / test.len() as f64);
    }
    let mse = data
        .y()
        .iter()
        .zip(&predictions)
        .map(|(y, p)| (y - p).powi(2))
        .sum::<f64>()
        / data.n() as f64;
    Ok(CrossValidation {
        folds: assign,
        predictions,
        mse,
        fold_mse,
    })
}

/// In-sample MSE of posterior-mean predictions.
pub fn in_sample_mse(fitted: &FitResult, data: &ExposureDataset) -> f64 {
    let pred = fitted.predict_dataset(data, &data.column_means());
    data.y().iter().zip(&pred).map(|(y, p)| (y - p).powi(2)).sum::<f64>() / data.n() as f64
}
