//! Multi-exposure longitudinal datasets.
//!
//! Exposures are stored exposure-major, time-minor: the flat index of
//! `(subject i, exposure j, time t)` is `i·p·T + j·T + t`. The same ordering
//! is used for every coefficient vector in the crate.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ExposureDataset {
    n: usize,
    p: usize,
    times: usize,
    ids: Vec<String>,
    y: Vec<f64>,
    x: Vec<f64>,
    missing: Vec<bool>,
    z: Vec<f64>,
    exposure_names: Vec<String>,
    covariate_names: Vec<String>,
}

/// Column means and standard deviations used by [`ExposureDataset::standardize`].
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizationRecord {
    pub y_mean: f64,
    pub y_sd: f64,
    /// One `(mean, sd)` pair per `(exposure, time)` column, exposure-major.
    pub columns: Vec<(f64, f64)>,
}

impl StandardizationRecord {
    pub fn restore_y(&self, y: f64) -> f64 {
        y * self.y_sd + self.y_mean
    }

    pub fn restore_x(&self, col: usize, x: f64) -> f64 {
        let (m, s) = self.columns[col];
        x * s + m
    }
}

impl ExposureDataset {
    /// `x` and `missing` have `n·p·times` entries; masked entries of `x` are ignored.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ids: Vec<String>,
        y: Vec<f64>,
        p: usize,
        times: usize,
        x: Vec<f64>,
        missing: Vec<bool>,
        z: Vec<f64>,
        exposure_names: Vec<String>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if p == 0 || times == 0 {
            return Err(Error::Input("need at least one exposure and one time".into()));
        }
        if ids.len() != n {
            return Err(Error::Input(format!("{} ids for {n} outcomes", ids.len())));
        }
        if x.len() != n * p * times || missing.len() != x.len() {
            return Err(Error::Input(format!(
                "exposure tensor needs {} entries, got {} values / {} mask flags",
                n * p * times,
                x.len(),
                missing.len()
            )));
        }
        if exposure_names.len() != p {
            return Err(Error::Input("one name per exposure required".into()));
        }
        let c = covariate_names.len();
        if z.len() != n * c {
            return Err(Error::Input(format!("covariate matrix needs {} entries", n * c)));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("outcome has missing or non-finite entries".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("covariates must be finite".into()));
        }
        if x.iter().zip(&missing).any(|(v, &m)| !m && !v.is_finite()) {
            return Err(Error::Input("observed exposures must be finite".into()));
        }
        let x = x
            .into_iter()
            .zip(&missing)
            .map(|(v, &m)| if m { 0.0 } else { v })
            .collect();
        Ok(Self {
            n,
            p,
            times,
            ids,
            y,
            x,
            missing,
            z,
            exposure_names,
            covariate_names,
        })
    }

    /// Dataset with default labels `e1..ep`, no covariates and no missing values.
    pub fn complete(y: Vec<f64>, p: usize, times: usize, x: Vec<f64>) -> Result<Self> {
        let n = y.len();
        let missing = vec![false; x.len()];
        Self::new(
            (1..=n).map(|i| i.to_string()).collect(),
            y,
            p,
            times,
            x,
            missing,
            Vec::new(),
            (1..=p).map(|j| format!("e{j}")).collect(),
            Vec::new(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn times(&self) -> usize {
        self.times
    }

    /// Number of `(exposure, time)` measurements per subject.
    pub fn width(&self) -> usize {
        self.p * self.times
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.x[i * w..(i + 1) * w]
    }

    pub fn missing(&self) -> &[bool] {
        &self.missing
    }

    pub fn missing_row(&self, i: usize) -> &[bool] {
        let w = self.width();
        &self.missing[i * w..(i + 1) * w]
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        let c = self.n_covariates();
        &self.z[i * c..(i + 1) * c]
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn exposure_names(&self) -> &[String] {
        &self.exposure_names
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    pub fn exposure_index(&self, name: &str) -> Option<usize> {
        self.exposure_names.iter().position(|c| c == name)
    }

    /// Label of the flat `(exposure, time)` column, e.g. `x_MEP_2`.
    pub fn column_label(&self, col: usize) -> String {
        format!("x_{}_{}", self.exposure_names[col / self.times], col % self.times + 1)
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    /// Flat indices into `x` of every masked entry, in storage order.
    pub fn missing_positions(&self) -> Vec<usize> {
        self.missing
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    /// Copy with the given flat positions masked.
    pub fn with_mask(&self, positions: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        for &pos in positions {
            if pos >= out.x.len() {
                return Err(Error::Input(format!("mask position {pos} out of range")));
            }
            out.missing[pos] = true;
            out.x[pos] = 0.0;
        }
        Ok(out)
    }

    /// Copy restricted to the given subject rows.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let w = self.width();
        let c = self.n_covariates();
        let mut out = Self {
            n: rows.len(),
            p: self.p,
            times: self.times,
            ids: Vec::with_capacity(rows.len()),
            y: Vec::with_capacity(rows.len()),
            x: Vec::with_capacity(rows.len() * w),
            missing: Vec::with_capacity(rows.len() * w),
            z: Vec::with_capacity(rows.len() * c),
            exposure_names: self.exposure_names.clone(),
            covariate_names: self.covariate_names.clone(),
        };
        for &i in rows {
            out.ids.push(self.ids[i].clone());
            out.y.push(self.y[i]);
            out.x.extend_from_slice(self.x_row(i));
            out.missing.extend_from_slice(self.missing_row(i));
            out.z.extend_from_slice(self.z_row(i));
        }
        out
    }

    /// Observed-entry mean of each `(exposure, time)` column.
    pub fn column_means(&self) -> Vec<f64> {
        let w = self.width();
        let mut sum = vec![0.0; w];
        let mut cnt = vec![0usize; w];
        for i in 0..self.n {
            for col in 0..w {
                if !self.missing[i * w + col] {
                    sum[col] += self.x[i * w + col];
                    cnt[col] += 1;
                }
            }
        }
        sum.iter()
            .zip(&cnt)
            .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect()
    }

    /// Copy with every masked entry replaced by its column's observed mean
    /// and the mask cleared.
    pub fn mean_imputed(&self) -> Self {
        let means = self.column_means();
        let w = self.width();
        let mut out = self.clone();
        for (idx, m) in out.missing.iter_mut().enumerate() {
            if *m {
                out.x[idx] = means[idx % w];
                *m = false;
            }
        }
        out
    }

    /// Centers and scales `y` and every `(exposure, time)` column to sample
    /// mean 0 and sample variance 1 (divisor `n − 1`) over observed entries.
    pub fn standardize(&self) -> Result<(Self, StandardizationRecord)> {
        let (y_mean, y_sd) = mean_sd(self.y.iter().copied())
            .ok_or_else(|| degenerate("y", "fewer than two values"))?;
        if !(y_sd > 0.0) {
            return Err(degenerate("y", "zero variance"));
        }
        let w = self.width();
        let mut columns = Vec::with_capacity(w);
        for col in 0..w {
            let values = (0..self.n)
                .filter(|&i| !self.missing[i * w + col])
                .map(|i| self.x[i * w + col]);
            let label = self.column_label(col);
            let (m, s) =
                mean_sd(values).ok_or_else(|| degenerate(&label, "fewer than two observed values"))?;
            if !(s > 0.0) {
                return Err(degenerate(&label, "zero variance"));
            }
            columns.push((m, s));
        }
        let mut out = self.clone();
        for v in &mut out.y {
            *v = (*v - y_mean) / y_sd;
        }
        for (idx, v) in out.x.iter_mut().enumerate() {
            if !out.missing[idx] {
                let (m, s) = columns[idx % w];
                *v = (*v - m) / s;
            }
        }
        Ok((
            out,
            StandardizationRecord {
                y_mean,
                y_sd,
                columns,
            },
        ))
    }
}

fn degenerate(column: &str, reason: &str) -> Error {
    Error::DegenerateColumn {
        column: column.to_string(),
        reason: reason.to_string(),
    }
}

/// Sample mean and standard deviation with divisor `n − 1`.
fn mean_sd(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}
