//! Rank-normalized split R-hat and effective sample sizes.
//!
//! Inputs are one `Vec<f64>` of draws per chain, all the same length.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::stats::{mean, quantile};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EssMode {
    Bulk,
    Tail,
}

/// Per-parameter convergence summary. Constant parameters report NaN with
/// `constant` set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamDiagnostics {
    pub rhat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
    pub constant: bool,
}

pub fn diagnose(chains: &[Vec<f64>]) -> ParamDiagnostics {
    let constant = is_constant(chains);
    ParamDiagnostics {
        rhat: split_rhat(chains),
        ess_bulk: ess(chains, EssMode::Bulk),
        ess_tail: ess(chains, EssMode::Tail),
        constant,
    }
}

pub fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains.iter().flat_map(|c| c.first()).next();
    match first {
        None => true,
        Some(&v) => chains.iter().flatten().all(|&x| x == v || (x - v).abs() <= 1e-300),
    }
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        // With an odd count the middle draw is dropped.
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Normal scores of the pooled ranks (average ranks for ties), using the
/// `(r − 3/8) / (S + 1/4)` offset.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut idx: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for (c, chain) in chains.iter().enumerate() {
        for (i, &v) in chain.iter().enumerate() {
            idx.push((v, c, i));
        }
    }
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let s = total as f64;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && idx[end].0 == idx[start].0 {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &(_, c, i) in &idx[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    out
}

fn basic_rhat(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, &mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn usable(chains: &[Vec<f64>]) -> bool {
    !chains.is_empty() && chains.iter().all(|c| c.len() >= 4 && c.len() == chains[0].len())
}

/// Split R-hat: the largest of the rank-normalized bulk, rank-normalized
/// folded (tail) and original-scale versions. Rank normalization alone
/// saturates for fully separated chains, so the original-scale value is
/// kept as a floor.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    if !usable(chains) || is_constant(chains) || chains.iter().flatten().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    let sp = split(chains);
    let bulk = basic_rhat(&rank_normalize(&sp));
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let med = quantile(&all, 0.5);
    let folded: Vec<Vec<f64>> = sp.iter().map(|c| c.iter().map(|x| (x - med).abs()).collect()).collect();
    let tail = basic_rhat(&rank_normalize(&folded));
    let raw = basic_rhat(&sp);
    let raw = if raw.is_finite() { raw } else { 1.0 };
    bulk.max(tail).max(raw)
}

/// Autocovariance at `lag` with divisor `n`.
fn autocov(c: &[f64], mu: f64, lag: usize) -> f64 {
    let n = c.len();
    let mut s = 0.0;
    for i in 0..n - lag {
        s += (c[i] - mu) * (c[i + lag] - mu);
    }
    s / n as f64
}

/// Effective sample size by Geyer's initial monotone sequence over
/// multiple chains (no transformation applied).
pub fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    if !usable(chains) || is_constant(chains) {
        return f64::NAN;
    }
    let m = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_acov = |lag: usize| -> f64 {
        chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, lag)).sum::<f64>() / m as f64
    };
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, 0)).collect();
    let nf = n as f64;
    let mean_var = acov0.iter().map(|a| a * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let g = mean(&means);
        var_plus += means.iter().map(|x| (x - g).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let mut rho = vec![0.0; n + 1];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = odd;
    let mut t = 0;
    while t + 5 < n && even + odd > 0.0 {
        t += 2;
        even = 1.0 - (mean_var - mean_acov(t)) / var_plus;
        odd = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
        if even + odd >= 0.0 {
            rho[t] = even;
            rho[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho[max_t] = even;
    }
    let mut t = 1;
    while t + 3 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let mut tau = -1.0 + 2.0 * rho[..=max_t].iter().sum::<f64>() + rho[max_t + 1];
    tau = tau.max(1.0 / total.log10());
    total / tau
}

pub fn ess(chains: &[Vec<f64>], mode: EssMode) -> f64 {
    if !usable(chains) || is_constant(chains) {
        return f64::NAN;
    }
    let sp = split(chains);
    match mode {
        EssMode::Bulk => ess_raw(&rank_normalize(&sp)),
        EssMode::Tail => {
            let all: Vec<f64> = chains.iter().flatten().copied().collect();
            let lo = quantile(&all, 0.05);
            let hi = quantile(&all, 0.95);
            let ind = |q: f64| -> Vec<Vec<f64>> {
                sp.iter()
                    .map(|c| c.iter().map(|&x| if x <= q { 1.0 } else { 0.0 }).collect())
                    .collect()
            };
            let a = ess_raw(&ind(lo));
            let b = ess_raw(&ind(hi));
            match (a.is_nan(), b.is_nan()) {
                (true, true) => f64::NAN,
                (true, false) => b,
                (false, true) => a,
                (false, false) => a.min(b),
            }
        }
    }
}
