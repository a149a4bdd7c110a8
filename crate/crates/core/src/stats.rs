//! Small summary-statistic helpers shared by diagnostics and effect summaries.

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with divisor `n − 1`.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// already sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(v: &[f64], prob: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, prob)
}

pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Welford accumulator.
#[derive(Clone, Debug, Default)]
pub struct RunningMoments {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sample_variance(&self) -> Vec<f64> {
        let d = (self.n as f64 - 1.0).max(1.0);
        self.m2.iter().map(|s| s / d).collect()
    }

    pub fn reset(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_on_one_to_thousand() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert!((quantile_sorted(&v, 0.025) - 25.975).abs() < 1e-12);
        assert!((quantile_sorted(&v, 0.975) - 975.025).abs() < 1e-12);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 1000.0);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [[1.0, 2.0], [3.0, -1.0], [4.5, 0.5], [0.0, 2.5]];
        let mut r = RunningMoments::new(2);
        xs.iter().for_each(|x| r.add(x));
        let col0: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        assert!((r.sample_variance()[0] - variance(&col0)).abs() < 1e-12);
        assert!((r.mean()[0] - mean(&col0)).abs() < 1e-12);
    }
}
