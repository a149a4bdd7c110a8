//! Warmup: dual-averaging step size and windowed diagonal-metric estimation.

use rand::Rng;

use super::metric::{Metric, MetricKind};
use super::nuts::{leapfrog, Point};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::Posterior;
use crate::stats::RunningMoments;

#[derive(Clone, Debug)]
pub struct DualAveraging {
    pub target: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(target: f64, stepsize: f64) -> Self {
        let mut d = Self {
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: 0.0,
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        };
        d.restart(stepsize);
        d
    }

    /// Forget history and shrink toward `log(10·stepsize)`.
    pub fn restart(&mut self, stepsize: f64) {
        self.mu = (10.0 * stepsize).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Feeds one acceptance statistic, returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.clamp(0.0, 1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    /// Averaged step size used after warmup.
    pub fn final_stepsize(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Metric adaptation windows in the usual fast / slow / fast layout.
#[derive(Clone, Debug)]
pub struct WindowSchedule {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    counter: usize,
    enabled: bool,
}

impl WindowSchedule {
    pub fn new(warmup: usize) -> Self {
        let (mut init, mut term, mut base) = (75, 50, 25);
        let enabled = warmup >= 20;
        if enabled && init + term + base > warmup {
            init = (0.15 * warmup as f64) as usize;
            term = (0.1 * warmup as f64) as usize;
            base = warmup - (init + term);
        }
        Self {
            warmup,
            init_buffer: init,
            term_buffer: term,
            window_size: base,
            next_window: init + base - 1,
            counter: 0,
            enabled,
        }
    }

    fn in_window(&self) -> bool {
        self.enabled
            && self.counter >= self.init_buffer
            && self.counter < self.warmup - self.term_buffer
            && self.counter != self.warmup
    }

    fn window_ends(&self) -> bool {
        self.enabled && self.counter == self.next_window && self.counter != self.warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last && self.next_window + 2 * self.window_size >= self.warmup - self.term_buffer {
            self.next_window = last;
        }
    }

    /// Ends of the slow windows (iteration indices) for this warmup length.
    pub fn window_ends_list(warmup: usize) -> Vec<usize> {
        let mut s = Self::new(warmup);
        let mut out = Vec::new();
        for _ in 0..warmup {
            if s.window_ends() {
                out.push(s.counter);
                s.compute_next_window();
            }
            s.counter += 1;
        }
        out
    }
}

/// Running covariance (Welford) for the dense metric.
#[derive(Clone, Debug)]
struct RunningCovariance {
    n: usize,
    mean: Vec<f64>,
    m2: DenseMatrix<f64>,
}

impl RunningCovariance {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: DenseMatrix::zeros(dim, dim),
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        let d: Vec<f64> = x.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (m, di) in self.mean.iter_mut().zip(&d) {
            *m += di / n;
        }
        let dim = d.len();
        for i in 0..dim {
            let after = x[i] - self.mean[i];
            for j in 0..dim {
                self.m2[(i, j)] += d[j] * after;
            }
        }
    }

    fn covariance(&self) -> DenseMatrix<f64> {
        let d = (self.n as f64 - 1.0).max(1.0);
        self.m2.scale(1.0 / d)
    }

    fn reset(&mut self) {
        *self = Self::new(self.mean.len());
    }
}

#[derive(Clone, Debug)]
enum Accumulator {
    Diag(RunningMoments),
    Dense(RunningCovariance),
}

/// Metric learner driven by a [`WindowSchedule`].
#[derive(Clone, Debug)]
pub struct MetricAdapter {
    schedule: WindowSchedule,
    acc: Accumulator,
}

impl MetricAdapter {
    pub fn new(warmup: usize, dim: usize, kind: MetricKind) -> Self {
        let acc = match kind {
            MetricKind::Diag => Accumulator::Diag(RunningMoments::new(dim)),
            MetricKind::Dense => Accumulator::Dense(RunningCovariance::new(dim)),
        };
        Self {
            schedule: WindowSchedule::new(warmup),
            acc,
        }
    }

    /// Records a warmup position; at the end of a slow window returns the
    /// regularized estimate, shrunk toward `1e-3·I`.
    pub fn learn(&mut self, q: &[f64]) -> Result<Option<Metric>> {
        if self.schedule.in_window() {
            match &mut self.acc {
                Accumulator::Diag(m) => m.add(q),
                Accumulator::Dense(c) => c.add(q),
            }
        }
        let mut out = None;
        if self.schedule.window_ends() {
            self.schedule.compute_next_window();
            out = Some(match &mut self.acc {
                Accumulator::Diag(m) => {
                    let n = m.count() as f64;
                    let var = m
                        .sample_variance()
                        .into_iter()
                        .map(|v| (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0)))
                        .collect();
                    m.reset();
                    Metric::diag(var)
                }
                Accumulator::Dense(c) => {
                    let n = c.n as f64;
                    let mut cov = c.covariance().scale(n / (n + 5.0));
                    for i in 0..cov.rows() {
                        cov[(i, i)] += 1e-3 * (5.0 / (n + 5.0));
                    }
                    c.reset();
                    Metric::dense(cov)?
                }
            });
        }
        self.schedule.counter += 1;
        Ok(out)
    }
}

/// Doubles or halves `eps` until a single leapfrog step crosses an
/// acceptance probability of 0.8.
pub fn init_stepsize<T, R>(target: &T, z: &Point, mut eps: f64, metric: &Metric, rng: &mut R) -> Result<f64>
where
    T: Posterior + ?Sized,
    R: Rng + ?Sized,
{
    let mut start = z.clone();
    let log_thresh = 0.8f64.ln();
    start.p = metric.sample_momentum(rng);
    let h0 = start.hamiltonian(metric);
    let delta = |eps: f64, start: &Point, h0: f64| -> f64 {
        match leapfrog(target, start, eps, metric) {
            Some(z1) => {
                let h = z1.hamiltonian(metric);
                if h.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    h0 - h
                }
            }
            None => f64::NEG_INFINITY,
        }
    };
    let d = delta(eps, &start, h0);
    let up = d > log_thresh;
    for _ in 0..200 {
        start.p = metric.sample_momentum(rng);
        let h0 = start.hamiltonian(metric);
        let d = delta(eps, &start, h0);
        if (up && !(d > log_thresh)) || (!up && !(d < log_thresh)) {
            return Ok(eps);
        }
        eps = if up { 2.0 * eps } else { 0.5 * eps };
        if eps > 1e7 {
            return Err(Error::FitFailure("step size diverged to infinity during warmup".into()));
        }
        if eps == 0.0 {
            return Err(Error::FitFailure("step size collapsed to zero during warmup".into()));
        }
    }
    Ok(eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_windows_for_thousand_iterations() {
        // 75 fast, then 25, 50, 100, 200, 500 (last one extended), then 50 fast.
        assert_eq!(WindowSchedule::window_ends_list(1000), vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn short_warmup_uses_proportional_buffers() {
        let ends = WindowSchedule::window_ends_list(100);
        assert_eq!(*ends.last().unwrap(), 89);
        assert!(WindowSchedule::window_ends_list(10).is_empty());
    }

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut d = DualAveraging::new(0.8, 1.0);
        let a = d.update(0.2);
        let mut d2 = DualAveraging::new(0.8, 1.0);
        let b = d2.update(0.99);
        assert!(a < b);
    }
}
