//! CSV file formats.
//!
//! Numbers are written in Rust's shortest round-trip form so that
//! write → read → write is byte-identical. Undefined values are `NA`.

use std::fs;
use std::path::Path;

use lowfr::data::ExposureDataset;
use lowfr::effects::Labels;
use lowfr::induced::InducedCoefficients;
use lowfr::sampler::PosteriorDraws;

use crate::error::{CliError, CliResult};

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        format!("{x:?}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt_f64)
}

fn parse_num(s: &str, what: impl FnOnce() -> String) -> CliResult<f64> {
    if s == "NA" {
        return Ok(f64::NAN);
    }
    s.trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{}: `{s}` is not a number", what())))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_table<I>(path: &Path, header: &[String], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Header and rows of a CSV file. A missing file is an IO error; a
/// malformed one is a usage error.
pub fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::io(path, &e),
            _ => CliError::usage(format!("{}: {e}", path.display())),
        })?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Splits `name_t` at the last underscore into an exposure name and a
/// 1-based time.
pub fn split_exposure_time(s: &str) -> Option<(&str, usize)> {
    let (name, t) = s.rsplit_once('_')?;
    let t: usize = t.parse().ok()?;
    (!name.is_empty() && t >= 1).then_some((name, t))
}

enum Column {
    Id,
    Y,
    Cov(usize),
    X(usize),
}

/// Reads the wide data format `id,y,cov_<name>...,x_<exposure>_<t>...`.
/// Empty exposure cells are missing.
pub fn read_dataset(path: &Path) -> CliResult<ExposureDataset> {
    let (header, rows) = read_table(path)?;
    let bad = |msg: String| CliError::usage(format!("{}: {msg}", path.display()));
    let mut exposures: Vec<String> = Vec::new();
    let mut max_t: Vec<usize> = Vec::new();
    let mut covariates = Vec::new();
    let mut cells: Vec<(usize, usize)> = Vec::new();
    let mut columns = Vec::with_capacity(header.len());
    let (mut has_id, mut has_y) = (false, false);
    for h in &header {
        if h == "id" {
            has_id = true;
            columns.push(Column::Id);
        } else if h == "y" {
            has_y = true;
            columns.push(Column::Y);
        } else if let Some(c) = h.strip_prefix("cov_") {
            columns.push(Column::Cov(covariates.len()));
            covariates.push(c.to_string());
        } else if let Some(rest) = h.strip_prefix("x_") {
            let (name, t) = split_exposure_time(rest).ok_or_else(|| bad(format!("cannot parse exposure column `{h}`")))?;
            let j = match exposures.iter().position(|e| e == name) {
                Some(j) => j,
                None => {
                    exposures.push(name.to_string());
                    max_t.push(0);
                    exposures.len() - 1
                }
            };
            max_t[j] = max_t[j].max(t);
            columns.push(Column::X(cells.len()));
            cells.push((j, t - 1));
        } else {
            return Err(bad(format!("unrecognized column `{h}`")));
        }
    }
    if !has_id || !has_y {
        return Err(bad("header needs `id` and `y` columns".into()));
    }
    if exposures.is_empty() {
        return Err(bad("no exposure columns".into()));
    }
    let times = max_t[0];
    if max_t.iter().any(|&t| t != times) || cells.len() != exposures.len() * times {
        return Err(bad("every exposure needs one column per time 1..T".into()));
    }
    let mut seen = vec![false; cells.len()];
    for &(j, t) in &cells {
        let pos = j * times + t;
        if seen[pos] {
            return Err(bad(format!("duplicate column x_{}_{}", exposures[j], t + 1)));
        }
        seen[pos] = true;
    }
    let (p, n, c) = (exposures.len(), rows.len(), covariates.len());
    let w = p * times;
    let (mut ids, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut x = vec![0.0; n * w];
    let mut missing = vec![false; n * w];
    let mut z = vec![0.0; n * c];
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        for (col, v) in columns.iter().zip(row) {
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite())
                    .ok_or_else(|| bad(format!("line {line}: `{v}` is not a finite number")))
            };
            match *col {
                Column::Id => ids.push(v.clone()),
                Column::Y => y.push(num(v)?),
                Column::Cov(k) => z[i * c + k] = num(v)?,
                Column::X(k) => {
                    let (j, t) = cells[k];
                    let pos = i * w + j * times + t;
                    if v.trim().is_empty() {
                        missing[pos] = true;
                    } else {
                        x[pos] = num(v)?;
                    }
                }
            }
        }
    }
    Ok(ExposureDataset::new(ids, y, p, times, x, missing, z, exposures, covariates)?)
}

pub fn dataset_header(data: &ExposureDataset) -> Vec<String> {
    let mut h = vec!["id".to_string(), "y".to_string()];
    h.extend(data.covariate_names().iter().map(|c| format!("cov_{c}")));
    h.extend((0..data.width()).map(|c| data.column_label(c)));
    h
}

pub fn write_dataset(path: &Path, data: &ExposureDataset) -> CliResult<()> {
    let rows = (0..data.n()).map(|i| {
        let mut r = vec![data.ids()[i].clone(), fmt_f64(data.y()[i])];
        r.extend(data.z_row(i).iter().map(|&v| fmt_f64(v)));
        r.extend(
            data.x_row(i)
                .iter()
                .zip(data.missing_row(i))
                .map(|(&v, &m)| if m { String::new() } else { fmt_f64(v) }),
        );
        r
    });
    write_table(path, &dataset_header(data), rows)
}

/// Constrained draws with leading `chain` and `iter` columns (both 1-based).
pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> CliResult<()> {
    let mut header = vec!["chain".to_string(), "iter".to_string()];
    header.extend(draws.names.iter().cloned());
    let rows = (0..draws.chains).flat_map(|c| {
        (0..draws.samples).map(move |s| {
            let mut r = vec![(c + 1).to_string(), (s + 1).to_string()];
            r.extend(draws.draw(c, s).iter().map(|&v| fmt_f64(v)));
            r
        })
    });
    write_table(path, &header, rows)
}

pub fn read_draws(path: &Path) -> CliResult<PosteriorDraws> {
    let (header, rows) = read_table(path)?;
    if header.len() < 2 || header[0] != "chain" || header[1] != "iter" {
        return Err(CliError::usage(format!("{}: expected `chain,iter,...` header", path.display())));
    }
    let names = header[2..].to_vec();
    let mut chains = 0usize;
    let mut values = Vec::with_capacity(rows.len() * names.len());
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        let chain: usize = row[0]
            .parse()
            .map_err(|_| CliError::usage(format!("{} line {line}: bad chain index", path.display())))?;
        chains = chains.max(chain);
        for v in &row[2..] {
            values.push(parse_num(v, || format!("{} line {line}", path.display()))?);
        }
    }
    if chains == 0 || rows.len() % chains != 0 {
        return Err(CliError::usage(format!("{}: uneven chains", path.display())));
    }
    Ok(PosteriorDraws::new(names, chains, rows.len() / chains, values)?)
}

/// Per-draw induced coefficients: `alpha0`, `alpha[<exposure>_<t>]` for each
/// column of `x`, then `gamma[<a>,<b>]` over the upper triangle of `Γ` in
/// row-major order (`(0,0), (0,1), …, (0,w−1), (1,1), …`).
pub fn write_induced(
    path: &Path,
    names: &[String],
    chains: usize,
    samples: usize,
    coefficients: &[InducedCoefficients<f64>],
) -> CliResult<()> {
    let mut header = vec!["chain".to_string(), "iter".to_string()];
    header.extend(names.iter().cloned());
    let rows = coefficients.iter().enumerate().map(|(d, c)| {
        let mut r = vec![(d / samples + 1).to_string(), (d % samples + 1).to_string()];
        r.push(fmt_f64(c.alpha0));
        r.extend(c.alpha.iter().map(|&v| fmt_f64(v)));
        r.extend(c.gamma_upper().into_iter().map(fmt_f64));
        r
    });
    debug_assert_eq!(coefficients.len(), chains * samples);
    write_table(path, &header, rows)
}

#[derive(Clone, Debug)]
pub struct InducedFile {
    pub labels: Labels,
    pub chains: usize,
    pub samples: usize,
    pub coefficients: Vec<InducedCoefficients<f64>>,
}

pub fn read_induced(path: &Path) -> CliResult<InducedFile> {
    let draws = read_draws(path)?;
    let bad = |m: &str| CliError::usage(format!("{}: {m}", path.display()));
    if draws.names.first().map(String::as_str) != Some("alpha0") {
        return Err(bad("first coefficient column must be alpha0"));
    }
    let mut exposures: Vec<String> = Vec::new();
    let mut times = 0;
    let mut w = 0;
    for n in &draws.names[1..] {
        let Some(inner) = n.strip_prefix("alpha[").and_then(|s| s.strip_suffix(']')) else {
            break;
        };
        let (name, t) = split_exposure_time(inner).ok_or_else(|| bad("cannot parse alpha column"))?;
        if !exposures.iter().any(|e| e == name) {
            exposures.push(name.to_string());
        }
        times = times.max(t);
        w += 1;
    }
    if w == 0 || w != exposures.len() * times || draws.names.len() != 1 + w + w * (w + 1) / 2 {
        return Err(bad("column count does not match an upper-triangular Γ"));
    }
    let coefficients = draws
        .iter_draws()
        .map(|d| InducedCoefficients::from_upper(d[0], d[1..1 + w].to_vec(), &d[1 + w..]))
        .collect::<lowfr::Result<Vec<_>>>()?;
    Ok(InducedFile {
        labels: Labels::new(exposures, times),
        chains: draws.chains,
        samples: draws.samples,
        coefficients,
    })
}
