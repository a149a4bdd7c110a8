//! Subcommand implementations. Each takes a fully resolved [`RunConfig`].

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use lowfr::cqr::CqrModel;
use lowfr::data::ExposureDataset;
use lowfr::effects::{
    exposure_cumulative_effects, group_effects, linear_grid, predictive_draws, regression_surface, sex_group_draws,
    summarize_effects, evaluate_metrics, EffectGroup, EffectSummary, EffectTable, Labels, MetricsRow, PpcMode, Selector,
    TruthTable,
};
use lowfr::fit::{choose_k, crossval, fit, FitConfig, FitResult, KChoice, ModelKind};
use lowfr::induced::Group;
use lowfr::model::{layout_for, ModelSpec, ParamLayout, Posterior as _, Variant};
use lowfr::sampler::{chain_seed, MetricKind, PosteriorDraws, SamplerConfig};
use lowfr::simgen::{gen_scenario, random_mask, Scenario, ScenarioDims};
use lowfr::stats::quantile;

use crate::config::{key, KeySpec, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{
    ensure_dir, fmt_f64, fmt_opt, read_dataset, read_draws, read_induced, write_dataset, write_draws, write_induced,
    write_table, write_text,
};

pub const SAMPLER_KEYS: [KeySpec; 7] = [
    key("sampler", "chains", Some("4")),
    key("sampler", "warmup", Some("1000")),
    key("sampler", "samples", Some("1000")),
    key("sampler", "seed", Some("1")),
    key("sampler", "target_accept", Some("0.8")),
    key("sampler", "max_treedepth", Some("10")),
    key("sampler", "metric", Some("diag")),
];

const JOBS: KeySpec = key("run", "jobs", None);

pub fn simulate_schema() -> Vec<KeySpec> {
    vec![
        key("simulate", "scenario", None),
        key("simulate", "seed", Some("1")),
        key("simulate", "n", Some("200")),
        key("simulate", "mask", Some("0")),
        key("simulate", "out", None),
        JOBS,
    ]
}

pub fn fit_schema() -> Vec<KeySpec> {
    let mut v = vec![
        key("fit", "data", None),
        key("fit", "out", None),
        key("fit", "model", Some("lowfr")),
        key("fit", "rank", Some("full")),
        key("fit", "k", Some("auto")),
        key("fit", "sex_col", None),
        key("fit", "sex_interactions", Some("false")),
        key("fit", "standardize", Some("false")),
    ];
    v.extend(SAMPLER_KEYS);
    v.push(JOBS);
    v
}

pub fn effects_schema() -> Vec<KeySpec> {
    vec![
        key("effects", "fit", None),
        key("effects", "out", None),
        key("effects", "groups", None),
        key("effects", "surface", None),
        key("effects", "grid", Some("-2:2:0.25")),
        key("effects", "intercept", Some("false")),
        JOBS,
    ]
}

pub fn ppc_schema() -> Vec<KeySpec> {
    vec![
        key("ppc", "fit", None),
        key("ppc", "out", None),
        key("ppc", "mode", Some("per_subject")),
        key("ppc", "seed", Some("1")),
        JOBS,
    ]
}

pub fn crossval_schema() -> Vec<KeySpec> {
    vec![
        key("crossval", "fit", None),
        key("crossval", "out", None),
        key("crossval", "folds", Some("10")),
        key("crossval", "seed", Some("1")),
        JOBS,
    ]
}

pub fn benchmark_schema() -> Vec<KeySpec> {
    let mut v = vec![
        key("benchmark", "scenario", Some("s1")),
        key("benchmark", "reps", Some("1")),
        key("benchmark", "models", Some("lowfr")),
        key("benchmark", "seed", Some("1")),
        key("benchmark", "n", Some("200")),
        key("benchmark", "mask", Some("0")),
        key("benchmark", "k", Some("auto")),
        key("benchmark", "rank", Some("full")),
        key("benchmark", "out", None),
    ];
    // Replicate sampler seeds derive from `benchmark.seed`.
    v.extend(SAMPLER_KEYS.iter().filter(|k| k.key != "seed"));
    v.push(JOBS);
    v
}

fn out_dir(cfg: &RunConfig, section: &str) -> CliResult<PathBuf> {
    let dir = PathBuf::from(cfg.require(section, "out")?);
    ensure_dir(&dir)?;
    Ok(dir)
}

fn write_config(dir: &Path, cfg: &RunConfig) -> CliResult<()> {
    write_text(&dir.join("config.resolved"), &cfg.render())
}

/// Commands that read a fit write into `<fit>/<command>` unless told
/// otherwise, so the fit's own `config.resolved` is never replaced.
fn default_out(cfg: &RunConfig, section: &str, fit_dir: &Path) -> PathBuf {
    match cfg.get(section, "out") {
        Some(o) => PathBuf::from(o),
        None => fit_dir.join(section),
    }
}

fn parse_fraction(cfg: &RunConfig, section: &str) -> CliResult<f64> {
    let f: f64 = cfg.parse(section, "mask")?;
    if !(0.0..1.0).contains(&f) {
        return Err(CliError::usage(format!("{section}.mask must lie in [0, 1), got {f}")));
    }
    Ok(f)
}

fn simulate_data(scenario: Scenario, seed: u64, n: usize, mask: f64) -> CliResult<(ExposureDataset, lowfr::simgen::SimTruth)> {
    let dims = ScenarioDims {
        n,
        ..ScenarioDims::default()
    };
    let (data, truth) = gen_scenario(scenario, seed, dims)?;
    if mask > 0.0 {
        let positions = random_mask(data.n() * data.width(), mask, seed);
        return Ok((data.with_mask(&positions)?, truth));
    }
    Ok((data, truth))
}

pub fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let scenario: Scenario = cfg.require("simulate", "scenario")?.parse()?;
    let seed: u64 = cfg.parse("simulate", "seed")?;
    let n: usize = cfg.parse("simulate", "n")?;
    let mask = parse_fraction(cfg, "simulate")?;
    let dir = out_dir(cfg, "simulate")?;
    let (data, truth) = simulate_data(scenario, seed, n, mask)?;
    write_dataset(&dir.join("data.csv"), &data)?;
    let labels = Labels::for_data(&data);
    let table = TruthTable::from_truth(&truth, &labels)?;
    let mut rows = vec![vec!["alpha0".to_string(), fmt_f64(truth.coefficients.alpha0)]];
    for (l, v) in table.main.iter().chain(&table.interaction).chain(&table.cumulative) {
        rows.push(vec![l.clone(), fmt_f64(*v)]);
    }
    write_table(&dir.join("truth.csv"), &["label".into(), "value".into()], rows)?;
    write_config(&dir, cfg)
}

fn sampler_config(cfg: &RunConfig) -> CliResult<SamplerConfig> {
    let s = SamplerConfig {
        seed: cfg.parse_opt("sampler", "seed")?.unwrap_or(1),
        chains: cfg.parse("sampler", "chains")?,
        warmup: cfg.parse("sampler", "warmup")?,
        samples: cfg.parse("sampler", "samples")?,
        target_accept: cfg.parse("sampler", "target_accept")?,
        max_treedepth: cfg.parse("sampler", "max_treedepth")?,
        init_stepsize: 1.0,
        metric: cfg.require("sampler", "metric")?.parse::<MetricKind>()?,
    };
    s.validate()?;
    Ok(s)
}

fn parse_rank(raw: &str) -> CliResult<Option<usize>> {
    if raw == "full" {
        return Ok(None);
    }
    match raw.parse::<usize>() {
        Ok(r) if r >= 1 => Ok(Some(r)),
        _ => Err(CliError::usage(format!("rank must be `full` or a positive integer, got `{raw}`"))),
    }
}

/// Fit settings from the `[fit]` and `[sampler]` sections.
pub fn fit_config(cfg: &RunConfig) -> CliResult<FitConfig> {
    Ok(FitConfig {
        model: cfg.require("fit", "model")?.parse()?,
        k: cfg.require("fit", "k")?.parse()?,
        rank: parse_rank(cfg.require("fit", "rank")?)?,
        sex_col: cfg.get("fit", "sex_col").map(str::to_string),
        sex_interactions: cfg.flag("fit", "sex_interactions")?,
        sampler: sampler_config(cfg)?,
    })
}

/// Dataset named by a fit config, standardized when requested.
pub fn fit_data(cfg: &RunConfig) -> CliResult<ExposureDataset> {
    let data = read_dataset(Path::new(cfg.require("fit", "data")?))?;
    if cfg.flag("fit", "standardize")? {
        Ok(data.standardize()?.0)
    } else {
        Ok(data)
    }
}

fn diagnostics_rows(source: &str, draws: &PosteriorDraws) -> Vec<Vec<String>> {
    draws
        .diagnostics()
        .into_iter()
        .zip(&draws.names)
        .map(|(d, n)| {
            vec![
                source.to_string(),
                n.clone(),
                fmt_f64(d.rhat),
                fmt_f64(d.ess_bulk),
                fmt_f64(d.ess_tail),
                String::new(),
            ]
        })
        .collect()
}

pub fn fit_cmd(cfg: &mut RunConfig) -> CliResult<()> {
    let data = fit_data(cfg)?;
    let mut fc = fit_config(cfg)?;
    let dir = out_dir(cfg, "fit")?;
    if fc.model == ModelKind::LowFr {
        let k = choose_k(&data, fc.k)?;
        fc.k = KChoice::Fixed(k);
        cfg.set("fit", "k", k.to_string());
    }
    let result = fit(&data, &fc)?;
    write_fit_outputs(&dir, &data, &result)?;
    write_config(&dir, cfg)
}

fn write_fit_outputs(dir: &Path, data: &ExposureDataset, result: &FitResult) -> CliResult<()> {
    write_draws(&dir.join("draws.csv"), &result.draws)?;
    let coef = result.coefficient_draws()?;
    write_induced(
        &dir.join("induced.csv"),
        &coef.names,
        coef.chains,
        coef.samples,
        &result.coefficients,
    )?;
    let mut rows = diagnostics_rows("param", &result.draws);
    rows.extend(diagnostics_rows("induced", &coef));
    let per_chain: Vec<usize> = result
        .draws
        .stats
        .iter()
        .map(|c| c.iter().filter(|s| s.divergent).count())
        .collect();
    for (c, d) in per_chain.iter().enumerate() {
        rows.push(vec![
            "sampler".into(),
            format!("chain_{}", c + 1),
            String::new(),
            String::new(),
            String::new(),
            d.to_string(),
        ]);
    }
    rows.push(vec![
        "sampler".into(),
        "total".into(),
        String::new(),
        String::new(),
        String::new(),
        per_chain.iter().sum::<usize>().to_string(),
    ]);
    let header: Vec<String> = ["source", "name", "rhat", "ess_bulk", "ess_tail", "divergences"]
        .map(String::from)
        .to_vec();
    write_table(&dir.join("diagnostics.csv"), &header, rows)?;
    let imputed = result.imputed();
    if !imputed.is_empty() {
        let rows = imputed.iter().map(|c| {
            vec![
                data.ids()[c.subject].clone(),
                data.column_label(c.column),
                fmt_f64(c.mean),
                fmt_f64(c.lower),
                fmt_f64(c.upper),
            ]
        });
        let header = ["id", "column", "mean", "lo95", "hi95"].map(String::from).to_vec();
        write_table(&dir.join("imputed.csv"), &header, rows)?;
    }
    Ok(())
}

/// A fit directory reloaded for downstream commands.
pub struct LoadedFit {
    pub config: RunConfig,
    pub data: ExposureDataset,
    pub spec: Option<ModelSpec>,
    pub layout: ParamLayout,
    pub draws: PosteriorDraws,
}

fn fit_dir_config(dir: &Path) -> CliResult<RunConfig> {
    let path = dir.join("config.resolved");
    if !path.exists() {
        return Err(CliError::usage(format!("{} is not a fit directory (no config.resolved)", dir.display())));
    }
    let mut cfg = RunConfig::new("fit", &fit_schema());
    cfg.apply_file(&path)?;
    Ok(cfg)
}

pub fn load_fit(dir: &Path) -> CliResult<LoadedFit> {
    let config = fit_dir_config(dir)?;
    let data = fit_data(&config)?;
    let fc = fit_config(&config)?;
    let (spec, layout) = match fc.model {
        ModelKind::Cqr => (None, CqrModel::new(&data)?.layout().clone()),
        kind => {
            let k = match kind {
                ModelKind::LowFr => choose_k(&data, fc.k)?,
                _ => 1,
            };
            let variant = match (kind, fc.sex_interactions) {
                (ModelKind::LowFr, true) => {
                    let name = fc.sex_col.as_deref().unwrap_or_default();
                    let sex_col = data
                        .covariate_index(name)
                        .ok_or_else(|| CliError::usage(format!("no covariate named `{name}`")))?;
                    Variant::LowFrSexInt { sex_col }
                }
                (ModelKind::LowFr, false) => Variant::LowFr,
                _ => Variant::Direct(match fc.rank {
                    Some(r) => lowfr::model::DirectRank::Rank(r),
                    None => lowfr::model::DirectRank::Full,
                }),
            };
            let spec = ModelSpec::for_data(&data, k, variant)?;
            let layout = layout_for(&spec);
            (Some(spec), layout)
        }
    };
    let draws = read_draws(&dir.join("draws.csv"))?;
    if draws.names != layout.names() {
        return Err(CliError::usage(format!(
            "{}: draw columns do not match the configured model",
            dir.join("draws.csv").display()
        )));
    }
    Ok(LoadedFit {
        config,
        data,
        spec,
        layout,
        draws,
    })
}

/// Parses a group definitions file. Each non-comment line is
/// `label = item, item, ... [@ t, t, ...]` where an item is an exposure
/// name (all times, or the times after `@`) or `<exposure>_<t>`.
pub fn parse_groups(text: &str, labels: &Labels, source: &str) -> CliResult<Vec<EffectGroup>> {
    let mut groups = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: &str| CliError::usage(format!("{source} line {}: {m}", idx + 1));
        let (label, rest) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| err("expected `label = exposures`"))?;
        let label = label.trim();
        if label.is_empty() {
            return Err(err("empty group label"));
        }
        let (items, times) = match rest.split_once('@') {
            Some((i, t)) => {
                let ts = t
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|_| err(&format!("bad time `{}`", s.trim()))))
                    .collect::<CliResult<Vec<_>>>()?;
                (i, Some(ts))
            }
            None => (rest, None),
        };
        let mut columns = Vec::new();
        for item in items.split(',').map(str::trim) {
            if item.is_empty() {
                return Err(err("empty exposure name"));
            }
            if labels.exposures.iter().any(|e| e == item) {
                let ts: Vec<usize> = times.clone().unwrap_or_else(|| (1..=labels.times).collect());
                for t in ts {
                    columns.push(labels.position(item, t).map_err(|e| err(&e.to_string()))?);
                }
            } else if let Some((name, t)) = crate::io::split_exposure_time(item) {
                if times.is_some() {
                    return Err(err("`@ times` cannot follow an item that names its time"));
                }
                columns.push(labels.position(name, t).map_err(|e| err(&e.to_string()))?);
            } else {
                return Err(err(&format!("unknown exposure `{item}`")));
            }
        }
        columns.sort_unstable();
        columns.dedup();
        groups.push(EffectGroup {
            label: label.to_string(),
            columns,
        });
    }
    if groups.is_empty() {
        return Err(CliError::usage(format!("{source}: no groups defined")));
    }
    Ok(groups)
}

/// `"<cols>;<cols>"` where each side is a comma-separated list of
/// `<exposure>_<t>` columns.
pub fn parse_surface(spec: &str, labels: &Labels) -> CliResult<(Vec<usize>, Vec<usize>)> {
    let (a, b) = spec
        .split_once(';')
        .ok_or_else(|| CliError::usage(format!("surface `{spec}` needs two axes separated by `;`")))?;
    let axis = |s: &str| -> CliResult<Vec<usize>> {
        s.split(',')
            .map(str::trim)
            .map(|item| {
                let (name, t) = crate::io::split_exposure_time(item)
                    .ok_or_else(|| CliError::usage(format!("surface column `{item}` is not `<exposure>_<t>`")))?;
                Ok(labels.position(name, t)?)
            })
            .collect()
    };
    Ok((axis(a)?, axis(b)?))
}

pub fn parse_grid(raw: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = raw.split(':').collect();
    let bad = || CliError::usage(format!("grid must be `lo:hi:step`, got `{raw}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    Ok(linear_grid(v[0], v[1], v[2])?)
}

fn summary_rows(rows: &[EffectSummary]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|s| {
            vec![
                s.label.clone(),
                fmt_f64(s.mean),
                fmt_f64(s.lower),
                fmt_f64(s.upper),
                s.excludes_zero.to_string(),
            ]
        })
        .collect()
}

pub fn effects_cmd(cfg: &RunConfig) -> CliResult<()> {
    let fit_dir = PathBuf::from(cfg.require("effects", "fit")?);
    let out = default_out(cfg, "effects", &fit_dir);
    ensure_dir(&out)?;
    // Validate cheap inputs before reading the draws.
    let fit_cfg = fit_dir_config(&fit_dir)?;
    let groups_text = match cfg.get("effects", "groups") {
        Some(p) => Some((p.to_string(), std::fs::read_to_string(p).map_err(|e| CliError::io(Path::new(p), e))?)),
        None => None,
    };
    let grid = parse_grid(cfg.require("effects", "grid")?)?;
    let induced = read_induced(&fit_dir.join("induced.csv"))?;
    let labels = &induced.labels;
    let draws = &induced.coefficients;
    let groups = match &groups_text {
        Some((p, text)) => Some(parse_groups(text, labels, p)?),
        None => None,
    };
    let surface = match cfg.get("effects", "surface") {
        Some(s) => Some(parse_surface(s, labels)?),
        None => None,
    };

    let mut rows = summarize_effects(draws, labels, Selector::All)?;
    rows.extend(exposure_cumulative_effects(draws, labels)?);
    if let Some(g) = &groups {
        rows.extend(group_effects(draws, labels, g)?);
    }
    if fit_cfg.flag("fit", "sex_interactions")? {
        let loaded = load_fit(&fit_dir)?;
        let spec = loaded.spec.as_ref().expect("LowFR fit has a spec");
        for (group, tag) in [(Group::Reference, "ref"), (Group::Flagged, "flagged")] {
            let gd = sex_group_draws(spec, &loaded.layout, &loaded.draws, group)?;
            for mut s in exposure_cumulative_effects(&gd, labels)? {
                s.label = format!("{}|{tag}", s.label);
                rows.push(s);
            }
            if let Some(g) = &groups {
                for mut s in group_effects(&gd, labels, g)? {
                    s.label = format!("{}|{tag}", s.label);
                    rows.push(s);
                }
            }
        }
    }
    let header = ["label", "mean", "lo95", "hi95", "excludes_zero"].map(String::from).to_vec();
    write_table(&out.join("effects.csv"), &header, summary_rows(&rows))?;

    if let Some((a1, a2)) = surface {
        let cells = regression_surface(draws, &a1, &a2, &grid, cfg.flag("effects", "intercept")?)?;
        let header = ["u", "v", "mean", "lo", "hi", "excludes_zero"].map(String::from).to_vec();
        let rows = cells.iter().map(|c| {
            vec![
                fmt_f64(c.u),
                fmt_f64(c.v),
                fmt_f64(c.mean),
                fmt_f64(c.lower),
                fmt_f64(c.upper),
                c.excludes_zero.to_string(),
            ]
        });
        write_table(&out.join("surface.csv"), &header, rows)?;
    }
    write_config(&out, cfg)
}

pub fn ppc_cmd(cfg: &RunConfig) -> CliResult<()> {
    let fit_dir = PathBuf::from(cfg.require("ppc", "fit")?);
    let out = default_out(cfg, "ppc", &fit_dir);
    let mode = match cfg.require("ppc", "mode")? {
        "per_subject" => PpcMode::PerSubject,
        "marginal" => PpcMode::Marginal,
        m => return Err(CliError::usage(format!("ppc mode must be per_subject or marginal, got `{m}`"))),
    };
    let seed: u64 = cfg.parse("ppc", "seed")?;
    ensure_dir(&out)?;
    let loaded = load_fit(&fit_dir)?;
    let spec = loaded
        .spec
        .as_ref()
        .filter(|s| s.variant.is_factor_model())
        .ok_or_else(|| CliError::usage("predictive checks need a LowFR fit"))?;
    let pred = predictive_draws(spec, &loaded.layout, &loaded.draws, &loaded.data, seed)?;
    match mode {
        PpcMode::PerSubject => {
            let rows = pred.per_subject(&loaded.data).into_iter().map(|s| {
                vec![s.id, fmt_f64(s.observed), fmt_f64(s.mean), fmt_f64(s.lower), fmt_f64(s.upper)]
            });
            let header = ["id", "observed", "mean", "lo95", "hi95"].map(String::from).to_vec();
            write_table(&out.join("ppc.csv"), &header, rows)?;
        }
        PpcMode::Marginal => {
            let observed = loaded.data.y();
            let rows = (1..=99).map(|q| {
                let p = q as f64 / 100.0;
                vec![fmt_f64(p), fmt_f64(quantile(observed, p)), fmt_f64(quantile(pred.marginal(), p))]
            });
            let header = ["quantile", "observed", "replicated"].map(String::from).to_vec();
            write_table(&out.join("ppc.csv"), &header, rows)?;
        }
    }
    write_config(&out, cfg)
}

/// In-sample MSE of a saved fit, from its induced and covariate draws.
fn saved_in_sample_mse(fit_dir: &Path, data: &ExposureDataset, draws: &PosteriorDraws, layout: &ParamLayout) -> CliResult<f64> {
    let induced = read_induced(&fit_dir.join("induced.csv"))?;
    let cov = layout.range("cov").unwrap_or(0..0);
    let cov_draws: Vec<&[f64]> = draws.iter_draws().map(|d| &d[cov.clone()]).collect();
    let fill = data.column_means();
    let se: f64 = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = data
                .x_row(i)
                .iter()
                .zip(data.missing_row(i))
                .enumerate()
                .map(|(c, (&v, &m))| if m { fill[c] } else { v })
                .collect();
            let z = data.z_row(i);
            let pred = induced
                .coefficients
                .iter()
                .zip(&cov_draws)
                .map(|(c, b)| c.mean_at(&x) + b.iter().zip(z).map(|(u, v)| u * v).sum::<f64>())
                .sum::<f64>()
                / induced.coefficients.len() as f64;
            (data.y()[i] - pred).powi(2)
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(se / data.n() as f64)
}

pub fn crossval_cmd(cfg: &RunConfig) -> CliResult<()> {
    let fit_dir = PathBuf::from(cfg.require("crossval", "fit")?);
    let out = default_out(cfg, "crossval", &fit_dir);
    let folds: usize = cfg.parse("crossval", "folds")?;
    let seed: u64 = cfg.parse("crossval", "seed")?;
    ensure_dir(&out)?;
    let loaded = load_fit(&fit_dir)?;
    let fc = fit_config(&loaded.config)?;
    let cv = crossval(&loaded.data, &fc, folds, seed)?;
    let in_sample = saved_in_sample_mse(&fit_dir, &loaded.data, &loaded.draws, &loaded.layout)?;
    let mut rows: Vec<Vec<String>> = cv
        .fold_mse
        .iter()
        .enumerate()
        .map(|(f, m)| {
            let n = cv.folds.iter().filter(|&&a| a == f).count();
            vec![(f + 1).to_string(), n.to_string(), fmt_f64(*m)]
        })
        .collect();
    rows.push(vec!["pooled".into(), loaded.data.n().to_string(), fmt_f64(cv.mse)]);
    rows.push(vec!["in_sample".into(), loaded.data.n().to_string(), fmt_f64(in_sample)]);
    write_table(&out.join("cv.csv"), &["fold".into(), "n".into(), "mse".into()], rows)?;
    write_config(&out, cfg)
}

/// Worst `R̂` over the induced coefficients of a fit.
pub fn max_induced_rhat(result: &FitResult) -> CliResult<f64> {
    let coef = result.coefficient_draws()?;
    Ok(coef
        .diagnostics()
        .iter()
        .filter(|d| !d.constant)
        .map(|d| d.rhat)
        .fold(f64::NAN, f64::max))
}

/// Seed of replicate `rep`'s dataset and its sampler. Both derive from the
/// run seed through SplitMix64 so replicates are independent and
/// reproducible.
pub fn replicate_seeds(seed: u64, rep: usize) -> (u64, u64) {
    (chain_seed(seed, rep), chain_seed(seed ^ 0x5a3c_96e1_f00d_b17e, rep))
}

struct BenchRow {
    model: String,
    rep: usize,
    row: Option<MetricsRow>,
    max_rhat: f64,
    error: Option<String>,
}

pub fn benchmark_cmd(cfg: &RunConfig) -> CliResult<()> {
    let scenario: Scenario = cfg.require("benchmark", "scenario")?.parse()?;
    let reps: usize = cfg.parse("benchmark", "reps")?;
    if reps == 0 {
        return Err(CliError::usage("benchmark needs reps ≥ 1"));
    }
    let seed: u64 = cfg.parse("benchmark", "seed")?;
    let n: usize = cfg.parse("benchmark", "n")?;
    let mask = parse_fraction(cfg, "benchmark")?;
    let models: Vec<ModelKind> = cfg
        .require("benchmark", "models")?
        .split(',')
        .map(|m| m.trim().parse::<ModelKind>())
        .collect::<lowfr::Result<_>>()?;
    if models.is_empty() {
        return Err(CliError::usage("benchmark needs at least one model"));
    }
    let base = FitConfig {
        model: ModelKind::LowFr,
        k: cfg.require("benchmark", "k")?.parse()?,
        rank: parse_rank(cfg.require("benchmark", "rank")?)?,
        sex_col: None,
        sex_interactions: false,
        sampler: sampler_config(cfg)?,
    };
    let dir = out_dir(cfg, "benchmark")?;

    let rows: Vec<Vec<BenchRow>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let (data_seed, sampler_seed) = replicate_seeds(seed, rep);
            let generated = simulate_data(scenario, data_seed, n, mask);
            models
                .iter()
                .map(|&model| {
                    let mut fc = base.clone();
                    fc.model = model;
                    fc.sampler.seed = sampler_seed;
                    let attempt = || -> CliResult<(MetricsRow, f64)> {
                        let (data, truth) = generated.as_ref().map_err(Clone::clone)?;
                        let result = fit(data, &fc)?;
                        let labels = Labels::for_data(data);
                        let est = EffectTable::from_draws(&result.coefficients, &labels)?;
                        let tt = TruthTable::from_truth(truth, &labels)?;
                        Ok((evaluate_metrics(model.name(), &est, &tt)?, max_induced_rhat(&result)?))
                    };
                    match attempt() {
                        Ok((row, rhat)) => BenchRow {
                            model: model.name().into(),
                            rep,
                            row: Some(row),
                            max_rhat: rhat,
                            error: None,
                        },
                        Err(e) => BenchRow {
                            model: model.name().into(),
                            rep,
                            row: None,
                            max_rhat: f64::NAN,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect()
        })
        .collect();
    let rows: Vec<BenchRow> = rows.into_iter().flatten().collect();

    let mut header = vec!["model".to_string(), "replicate".to_string(), "status".to_string()];
    header.extend(MetricsRow::FIELDS.iter().map(|s| s.to_string()));
    header.push("max_rhat".into());
    let na_fields = || vec!["NA".to_string(); MetricsRow::FIELDS.len()];
    let mut out_rows = Vec::new();
    for r in &rows {
        let mut line = vec![r.model.clone(), (r.rep + 1).to_string()];
        match &r.row {
            Some(m) => {
                line.push("ok".into());
                line.extend(m.values().iter().map(|v| fmt_opt(*v)));
            }
            None => {
                line.push("failed".into());
                line.extend(na_fields());
            }
        }
        line.push(fmt_f64(r.max_rhat));
        out_rows.push(line);
    }
    for &model in &models {
        let ok: Vec<&BenchRow> = rows.iter().filter(|r| r.model == model.name() && r.row.is_some()).collect();
        let metrics: Vec<MetricsRow> = ok.iter().filter_map(|r| r.row.clone()).collect();
        let mut line = vec![model.name().to_string(), "mean".into()];
        match MetricsRow::average(model.name(), &metrics) {
            Some(avg) => {
                line.push(format!("{}/{}", metrics.len(), reps));
                line.extend(avg.values().iter().map(|v| fmt_opt(*v)));
            }
            None => {
                line.push(format!("0/{reps}"));
                line.extend(na_fields());
            }
        }
        let worst = ok.iter().map(|r| r.max_rhat).fold(f64::NAN, f64::max);
        line.push(fmt_f64(worst));
        out_rows.push(line);
    }
    write_table(&dir.join("metrics.csv"), &header, out_rows)?;
    write_config(&dir, cfg)?;

    let failed: Vec<&BenchRow> = rows.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        eprintln!(
            "replicate {} model {} failed: {}",
            r.rep + 1,
            r.model,
            r.error.as_deref().unwrap_or_default()
        );
    }
    if failed.len() * 5 > rows.len() {
        return Err(CliError::Inference(format!("{} of {} fits failed", failed.len(), rows.len())));
    }
    Ok(())
}

