//! Posterior summaries of induced coefficients: main, interaction,
//! cumulative and group effects, regression surfaces, predictive checks and
//! the simulation metric suite.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::ExposureDataset;
use crate::error::{Error, Result};
use crate::induced::{group_induced, upper_pairs, Group, InducedCoefficients};
use crate::model::{LowFrParams, ModelSpec, ParamLayout, Variant};
use crate::sampler::{chain_seed, PosteriorDraws};
use crate::simgen::SimTruth;
use crate::stats::{mean, quantile_sorted};

pub use crate::fit::{crossval, fold_assignment, CrossValidation};

#[derive(Clone, Debug, PartialEq)]
pub struct EffectSummary {
    pub label: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub excludes_zero: bool,
}

impl EffectSummary {
    /// Mean and 95% equal-tailed type-7 interval of `draws`.
    pub fn from_draws(label: impl Into<String>, draws: &[f64]) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Usage("cannot summarize an empty set of draws".into()));
        }
        let mut s = draws.to_vec();
        s.sort_by(f64::total_cmp);
        let (lower, upper) = (quantile_sorted(&s, 0.025), quantile_sorted(&s, 0.975));
        // Clamp guards against rounding when all draws are equal.
        let m = mean(&s).clamp(lower, upper);
        Ok(Self {
            label: label.into(),
            mean: m,
            lower,
            upper,
            excludes_zero: !(lower <= 0.0 && 0.0 <= upper),
        })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Names `(exposure, time)` columns of `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    pub exposures: Vec<String>,
    pub times: usize,
}

impl Labels {
    pub fn new(exposures: Vec<String>, times: usize) -> Self {
        Self { exposures, times }
    }

    pub fn for_data(data: &ExposureDataset) -> Self {
        Self::new(data.exposure_names().to_vec(), data.times())
    }

    pub fn width(&self) -> usize {
        self.exposures.len() * self.times
    }

    /// `MEP_2` for exposure `MEP` at the second time.
    pub fn col(&self, c: usize) -> String {
        format!("{}_{}", self.exposures[c / self.times], c % self.times + 1)
    }

    pub fn main(&self, c: usize) -> String {
        format!("main[{}]", self.col(c))
    }

    pub fn interaction(&self, a: usize, b: usize) -> String {
        format!("int[{},{}]", self.col(a), self.col(b))
    }

    pub fn cumulative(&self, j: usize) -> String {
        format!("cum[{}]", self.exposures[j])
    }

    /// Flat column of exposure `name` at 1-based time `t`.
    pub fn position(&self, name: &str, t: usize) -> Result<usize> {
        let j = self
            .exposures
            .iter()
            .position(|e| e == name)
            .ok_or_else(|| Error::Usage(format!("unknown exposure `{name}`")))?;
        if t == 0 || t > self.times {
            return Err(Error::Usage(format!("time {t} outside 1..={}", self.times)));
        }
        Ok(j * self.times + t - 1)
    }
}

/// Which coefficients to summarize. Indices are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selector {
    Main { j: usize, t: usize },
    Interaction { j1: usize, t1: usize, j2: usize, t2: usize },
    /// Every main effect, then every interaction over the upper triangle.
    All,
}

fn check_draws(draws: &[InducedCoefficients<f64>], labels: &Labels) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::Usage("no posterior draws to summarize".into()));
    }
    if draws[0].width() != labels.width() {
        return Err(Error::Dimension(format!(
            "coefficients have width {}, labels describe {}",
            draws[0].width(),
            labels.width()
        )));
    }
    Ok(())
}

fn col_of(labels: &Labels, j: usize, t: usize) -> Result<usize> {
    if j >= labels.exposures.len() || t >= labels.times {
        return Err(Error::Usage(format!("coefficient ({j}, {t}) out of range")));
    }
    Ok(j * labels.times + t)
}

fn summarize_main(draws: &[InducedCoefficients<f64>], labels: &Labels, c: usize) -> Result<EffectSummary> {
    let v: Vec<f64> = draws.iter().map(|d| d.alpha[c]).collect();
    EffectSummary::from_draws(labels.main(c), &v)
}

fn summarize_interaction(
    draws: &[InducedCoefficients<f64>],
    labels: &Labels,
    a: usize,
    b: usize,
) -> Result<EffectSummary> {
    let (a, b) = (a.min(b), a.max(b));
    let v: Vec<f64> = draws.iter().map(|d| d.interaction(a, b)).collect();
    EffectSummary::from_draws(labels.interaction(a, b), &v)
}

pub fn summarize_effects(
    draws: &[InducedCoefficients<f64>],
    labels: &Labels,
    selector: Selector,
) -> Result<Vec<EffectSummary>> {
    check_draws(draws, labels)?;
    match selector {
        Selector::Main { j, t } => Ok(vec![summarize_main(draws, labels, col_of(labels, j, t)?)?]),
        Selector::Interaction { j1, t1, j2, t2 } => {
            let (a, b) = (col_of(labels, j1, t1)?, col_of(labels, j2, t2)?);
            Ok(vec![summarize_interaction(draws, labels, a, b)?])
        }
        Selector::All => {
            let w = labels.width();
            let mut out: Vec<EffectSummary> = (0..w)
                .into_par_iter()
                .map(|c| summarize_main(draws, labels, c))
                .collect::<Result<_>>()?;
            let ints: Vec<EffectSummary> = upper_pairs(w)
                .into_par_iter()
                .map(|(a, b)| summarize_interaction(draws, labels, a, b))
                .collect::<Result<_>>()?;
            out.extend(ints);
            Ok(out)
        }
    }
}

fn check_subset(subset: &[usize], width: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::Usage("effect subset is empty".into()));
    }
    if let Some(&c) = subset.iter().find(|&&c| c >= width) {
        return Err(Error::Usage(format!("column {c} outside 0..{width}")));
    }
    Ok(())
}

/// Per-draw change in `E[y | x]` when the `subset` columns move from `lo` to
/// `hi` with every other column at 0.
pub fn contrast_draws(draws: &[InducedCoefficients<f64>], subset: &[usize], lo: f64, hi: f64) -> Result<Vec<f64>> {
    let w = draws.first().map_or(0, |d| d.width());
    if draws.is_empty() {
        return Err(Error::Usage("no posterior draws to summarize".into()));
    }
    check_subset(subset, w)?;
    let point = |v: f64| {
        let mut x = vec![0.0; w];
        subset.iter().for_each(|&c| x[c] = v);
        x
    };
    let (xl, xh) = (point(lo), point(hi));
    Ok(draws.par_iter().map(|d| d.mean_at(&xh) - d.mean_at(&xl)).collect())
}

pub fn contrast_effect(
    draws: &[InducedCoefficients<f64>],
    label: &str,
    subset: &[usize],
    lo: f64,
    hi: f64,
) -> Result<EffectSummary> {
    EffectSummary::from_draws(label, &contrast_draws(draws, subset, lo, hi)?)
}

/// Change in `E[y | x]` moving `subset` from −1 to 1.
pub fn cumulative_effect(draws: &[InducedCoefficients<f64>], label: &str, subset: &[usize]) -> Result<EffectSummary> {
    contrast_effect(draws, label, subset, -1.0, 1.0)
}

/// Cumulative effect of every exposure across all of its times.
pub fn exposure_cumulative_effects(
    draws: &[InducedCoefficients<f64>],
    labels: &Labels,
) -> Result<Vec<EffectSummary>> {
    check_draws(draws, labels)?;
    let tt = labels.times;
    (0..labels.exposures.len())
        .map(|j| {
            let subset: Vec<usize> = (j * tt..(j + 1) * tt).collect();
            cumulative_effect(draws, &labels.cumulative(j), &subset)
        })
        .collect()
}

/// Named subset of `(exposure, time)` columns, e.g. the metabolites of one
/// parent compound.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectGroup {
    pub label: String,
    pub columns: Vec<usize>,
}

pub fn group_effects(
    draws: &[InducedCoefficients<f64>],
    labels: &Labels,
    groups: &[EffectGroup],
) -> Result<Vec<EffectSummary>> {
    check_draws(draws, labels)?;
    groups
        .iter()
        .map(|g| cumulative_effect(draws, &format!("group[{}]", g.label), &g.columns))
        .collect()
}

/// Per-draw induced coefficients of one sex group in a sex-interaction fit.
pub fn sex_group_draws(
    spec: &ModelSpec,
    layout: &ParamLayout,
    draws: &PosteriorDraws,
    group: Group,
) -> Result<Vec<InducedCoefficients<f64>>> {
    let rows: Vec<&[f64]> = draws.iter_draws().collect();
    rows.par_iter().map(|d| group_induced(spec, layout, d, group)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceCell {
    pub u: f64,
    pub v: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub excludes_zero: bool,
}

/// Regression surface over a 2-d grid: `axis1` columns at `u`, `axis2`
/// columns at `v`, others (and covariates) at 0. Cells are `u`-major.
pub fn regression_surface(
    draws: &[InducedCoefficients<f64>],
    axis1: &[usize],
    axis2: &[usize],
    grid: &[f64],
    include_intercept: bool,
) -> Result<Vec<SurfaceCell>> {
    if draws.is_empty() {
        return Err(Error::Usage("no posterior draws to summarize".into()));
    }
    let w = draws[0].width();
    check_subset(axis1, w)?;
    check_subset(axis2, w)?;
    if axis1.iter().any(|c| axis2.contains(c)) {
        return Err(Error::Usage("surface axes overlap".into()));
    }
    if grid.is_empty() {
        return Err(Error::Usage("surface grid is empty".into()));
    }
    // Value at (u, v) is c0 + a1 u + a2 v + q11 u² + q12 uv + q22 v².
    let reduce: Vec<[f64; 6]> = draws
        .par_iter()
        .map(|d| {
            let lin = |ax: &[usize]| ax.iter().map(|&c| d.alpha[c]).sum::<f64>();
            let quad = |r: &[usize], s: &[usize]| {
                r.iter().flat_map(|&a| s.iter().map(move |&b| (a, b))).map(|(a, b)| d.gamma[(a, b)]).sum::<f64>()
            };
            [
                if include_intercept { d.alpha0 } else { 0.0 },
                lin(axis1),
                lin(axis2),
                quad(axis1, axis1),
                2.0 * quad(axis1, axis2),
                quad(axis2, axis2),
            ]
        })
        .collect();
    let cells: Vec<(f64, f64)> = grid.iter().flat_map(|&u| grid.iter().map(move |&v| (u, v))).collect();
    cells
        .into_par_iter()
        .map(|(u, v)| {
            let vals: Vec<f64> = reduce
                .iter()
                .map(|c| c[0] + c[1] * u + c[2] * v + c[3] * u * u + c[4] * u * v + c[5] * v * v)
                .collect();
            let s = EffectSummary::from_draws("", &vals)?;
            Ok(SurfaceCell {
                u,
                v,
                mean: s.mean,
                lower: s.lower,
                upper: s.upper,
                excludes_zero: s.excludes_zero,
            })
        })
        .collect()
}

/// Evenly spaced grid from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Usage(format!("bad grid {lo}..{hi} step {step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PpcMode {
    PerSubject,
    Marginal,
}

/// Posterior predictive replicates, `y_rep[d * n + i]` for draw `d` and
/// subject `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDraws {
    pub n: usize,
    pub draws: usize,
    pub y_rep: Vec<f64>,
    /// Per-draw regression function `E[y_i | η_i, z_i]`, same indexing.
    pub means: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectPredictive {
    pub id: String,
    pub observed: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `μ + zᵀc + (θ + s θ_sex)ᵀη + ηᵀ(B ⊗ W)η` for every subject of one draw.
pub fn subject_means(params: &LowFrParams, data: &ExposureDataset, sex: Option<usize>) -> Result<Vec<f64>> {
    let (k, tt) = (params.b.rows(), params.w.rows());
    let kt = k * tt;
    if params.eta.len() != data.n() * kt {
        return Err(Error::Usage("draw carries no latent factors for these subjects".into()));
    }
    let theta = params.theta();
    let theta_sex = params.theta_sex();
    Ok((0..data.n())
        .map(|i| {
            let e = &params.eta[i * kt..(i + 1) * kt];
            let z = data.z_row(i);
            let s = sex.map_or(0.0, |c| z[c]);
            let mut m = params.mu + params.cov.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
            for idx in 0..kt {
                let extra = theta_sex.as_ref().map_or(0.0, |ts| s * ts[idx]);
                m += (theta[idx] + extra) * e[idx];
            }
            for h in 0..k {
                for g in 0..k {
                    let bhg = params.b[(h, g)];
                    if bhg == 0.0 {
                        continue;
                    }
                    for t in 0..tt {
                        for u in 0..tt {
                            m += e[h * tt + t] * bhg * params.w[(t, u)] * e[g * tt + u];
                        }
                    }
                }
            }
            m
        })
        .collect())
}

/// Replicates `y* ~ N(E[y_i | η_i, z_i], σ²_y)` from every retained draw.
/// Each draw has its own stream derived from `seed`.
pub fn predictive_draws(
    spec: &ModelSpec,
    layout: &ParamLayout,
    draws: &PosteriorDraws,
    data: &ExposureDataset,
    seed: u64,
) -> Result<PredictiveDraws> {
    if !spec.variant.is_factor_model() {
        return Err(Error::Usage("predictive checks need a LowFR fit with latent factor draws".into()));
    }
    if layout.range("eta").is_none_or(|r| r.is_empty()) || spec.n != data.n() {
        return Err(Error::Usage("fit has no latent factor draws for this dataset".into()));
    }
    let sex = match spec.variant {
        Variant::LowFrSexInt { sex_col } => Some(sex_col),
        _ => None,
    };
    let rows: Vec<&[f64]> = draws.iter_draws().collect();
    if rows.is_empty() {
        return Err(Error::Usage("no posterior draws".into()));
    }
    let per: Vec<(Vec<f64>, Vec<f64>)> = rows
        .par_iter()
        .enumerate()
        .map(|(d, row)| {
            let params = LowFrParams::from_constrained(spec, layout, row)?;
            let m = subject_means(&params, data, sex)?;
            let sd = params.sigma2_y.sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(chain_seed(seed ^ 0x7070_6300, d));
            let y: Vec<f64> = m
                .iter()
                .map(|&mi| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mi + sd * z
                })
                .collect();
            Ok((y, m))
        })
        .collect::<Result<_>>()?;
    let mut y_rep = Vec::with_capacity(rows.len() * data.n());
    let mut means = Vec::with_capacity(rows.len() * data.n());
    for (y, m) in per {
        y_rep.extend(y);
        means.extend(m);
    }
    Ok(PredictiveDraws {
        n: data.n(),
        draws: rows.len(),
        y_rep,
        means,
    })
}

impl PredictiveDraws {
    pub fn subject(&self, i: usize) -> Vec<f64> {
        (0..self.draws).map(|d| self.y_rep[d * self.n + i]).collect()
    }

    /// Predictive mean and 95% interval per subject.
    pub fn per_subject(&self, data: &ExposureDataset) -> Vec<SubjectPredictive> {
        (0..self.n)
            .map(|i| {
                let s = EffectSummary::from_draws("", &self.subject(i)).expect("at least one draw");
                SubjectPredictive {
                    id: data.ids()[i].clone(),
                    observed: data.y()[i],
                    mean: s.mean,
                    lower: s.lower,
                    upper: s.upper,
                }
            })
            .collect()
    }

    /// All replicates pooled across subjects and draws.
    pub fn marginal(&self) -> &[f64] {
        &self.y_rep
    }

    /// Fraction of observed outcomes inside their 95% predictive interval.
    pub fn interval_coverage(&self, data: &ExposureDataset) -> f64 {
        let rows = self.per_subject(data);
        rows.iter().filter(|r| r.lower <= r.observed && r.observed <= r.upper).count() as f64 / rows.len() as f64
    }
}

/// One row of the simulation metric table. Rates that have no eligible
/// coefficients (no true zeros for TN, no true nonzeros for TP) are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub model: String,
    pub main_mse: f64,
    pub interaction_mse: f64,
    pub main_coverage: f64,
    pub interaction_coverage: f64,
    pub main_tp: Option<f64>,
    pub main_tn: Option<f64>,
    pub ce_mse: f64,
    pub ce_coverage: f64,
    pub ce_tp: Option<f64>,
    pub ce_tn: Option<f64>,
}

impl MetricsRow {
    pub const FIELDS: [&'static str; 10] = [
        "main_mse",
        "interaction_mse",
        "main_coverage",
        "interaction_coverage",
        "main_tp",
        "main_tn",
        "ce_mse",
        "ce_coverage",
        "ce_tp",
        "ce_tn",
    ];

    pub fn values(&self) -> [Option<f64>; 10] {
        [
            Some(self.main_mse),
            Some(self.interaction_mse),
            Some(self.main_coverage),
            Some(self.interaction_coverage),
            self.main_tp,
            self.main_tn,
            Some(self.ce_mse),
            Some(self.ce_coverage),
            self.ce_tp,
            self.ce_tn,
        ]
    }

    /// Field-wise mean; undefined entries are skipped.
    pub fn average(model: &str, rows: &[MetricsRow]) -> Option<MetricsRow> {
        if rows.is_empty() {
            return None;
        }
        let avg = |f: usize| -> Option<f64> {
            let v: Vec<f64> = rows.iter().filter_map(|r| r.values()[f]).collect();
            (!v.is_empty()).then(|| mean(&v))
        };
        Some(MetricsRow {
            model: model.to_string(),
            main_mse: avg(0).unwrap_or(f64::NAN),
            interaction_mse: avg(1).unwrap_or(f64::NAN),
            main_coverage: avg(2).unwrap_or(f64::NAN),
            interaction_coverage: avg(3).unwrap_or(f64::NAN),
            main_tp: avg(4),
            main_tn: avg(5),
            ce_mse: avg(6).unwrap_or(f64::NAN),
            ce_coverage: avg(7).unwrap_or(f64::NAN),
            ce_tp: avg(8),
            ce_tn: avg(9),
        })
    }
}

/// Posterior summaries in the three families scored by [`evaluate_metrics`].
#[derive(Clone, Debug, PartialEq)]
pub struct EffectTable {
    pub main: Vec<EffectSummary>,
    pub interaction: Vec<EffectSummary>,
    pub cumulative: Vec<EffectSummary>,
}

impl EffectTable {
    pub fn from_draws(draws: &[InducedCoefficients<f64>], labels: &Labels) -> Result<Self> {
        let all = summarize_effects(draws, labels, Selector::All)?;
        let w = labels.width();
        let (main, interaction) = all.split_at(w);
        Ok(Self {
            main: main.to_vec(),
            interaction: interaction.to_vec(),
            cumulative: exposure_cumulative_effects(draws, labels)?,
        })
    }
}

/// True values under the same labels as [`EffectTable`].
#[derive(Clone, Debug, PartialEq)]
pub struct TruthTable {
    pub main: Vec<(String, f64)>,
    pub interaction: Vec<(String, f64)>,
    pub cumulative: Vec<(String, f64)>,
}

impl TruthTable {
    pub fn from_truth(truth: &SimTruth, labels: &Labels) -> Result<Self> {
        let c = &truth.coefficients;
        if c.width() != labels.width() {
            return Err(Error::Alignment("truth and labels have different widths".into()));
        }
        Ok(Self {
            main: (0..c.width()).map(|a| (labels.main(a), c.alpha[a])).collect(),
            interaction: upper_pairs(c.width())
                .into_iter()
                .map(|(a, b)| (labels.interaction(a, b), c.interaction(a, b)))
                .collect(),
            cumulative: truth
                .cumulative
                .iter()
                .enumerate()
                .map(|(j, &v)| (labels.cumulative(j), v))
                .collect(),
        })
    }
}

struct FamilyScore {
    mse: f64,
    coverage: f64,
    tp: Option<f64>,
    tn: Option<f64>,
}

fn score(estimates: &[EffectSummary], truth: &[(String, f64)], family: &str) -> Result<FamilyScore> {
    if estimates.len() != truth.len() {
        return Err(Error::Alignment(format!(
            "{family}: {} estimates for {} true values",
            estimates.len(),
            truth.len()
        )));
    }
    let by_label: HashMap<&str, &EffectSummary> = estimates.iter().map(|e| (e.label.as_str(), e)).collect();
    if by_label.len() != estimates.len() {
        return Err(Error::Alignment(format!("{family}: duplicate estimate labels")));
    }
    let (mut se, mut covered) = (0.0, 0usize);
    let (mut pos, mut tp, mut zeros, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (label, v) in truth {
        let e = by_label
            .get(label.as_str())
            .ok_or_else(|| Error::Alignment(format!("{family}: no estimate labelled `{label}`")))?;
        se += (e.mean - v).powi(2);
        covered += e.covers(*v) as usize;
        if *v == 0.0 {
            zeros += 1;
            tn += (!e.excludes_zero) as usize;
        } else {
            pos += 1;
            let right_sign = if *v > 0.0 { e.lower > 0.0 } else { e.upper < 0.0 };
            tp += right_sign as usize;
        }
    }
    let n = truth.len().max(1) as f64;
    let rate = |hit: usize, of: usize| (of > 0).then(|| hit as f64 / of as f64);
    Ok(FamilyScore {
        mse: se / n,
        coverage: covered as f64 / n,
        tp: rate(tp, pos),
        tn: rate(tn, zeros),
    })
}

/// Scores posterior summaries against the truth. Matching is by label, so
/// the order of either side does not matter.
pub fn evaluate_metrics(model: &str, estimates: &EffectTable, truth: &TruthTable) -> Result<MetricsRow> {
    let main = score(&estimates.main, &truth.main, "main")?;
    let int = score(&estimates.interaction, &truth.interaction, "interaction")?;
    let ce = score(&estimates.cumulative, &truth.cumulative, "cumulative")?;
    Ok(MetricsRow {
        model: model.to_string(),
        main_mse: main.mse,
        interaction_mse: int.mse,
        main_coverage: main.coverage,
        interaction_coverage: int.coverage,
        main_tp: main.tp,
        main_tn: main.tn,
        ce_mse: ce.mse,
        ce_coverage: ce.coverage,
        ce_tp: ce.tp,
        ce_tn: ce.tn,
    })
}
