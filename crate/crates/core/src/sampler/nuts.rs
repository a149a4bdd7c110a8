//! Multinomial No-U-Turn transitions with a diagonal metric.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Posterior;

use super::metric::Metric;

/// Energy error beyond which a trajectory is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Phase-space point.
#[derive(Clone, Debug)]
pub struct Point {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl Point {
    /// Position with zero momentum; fails if the density or its gradient is
    /// not finite at `q`.
    pub fn new(target: &(impl Posterior + ?Sized), q: Vec<f64>) -> Result<Self> {
        let mut grad = vec![0.0; q.len()];
        let logp = target.log_density_grad(&q, &mut grad)?;
        if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Initialization("non-finite density or gradient".into()));
        }
        Ok(Self {
            p: vec![0.0; q.len()],
            q,
            grad,
            logp,
        })
    }

    pub fn kinetic(&self, metric: &Metric) -> f64 {
        metric.kinetic(&self.p)
    }

    pub fn hamiltonian(&self, metric: &Metric) -> f64 {
        -self.logp + self.kinetic(metric)
    }

    fn velocity(&self, metric: &Metric) -> Vec<f64> {
        metric.velocity(&self.p)
    }
}

/// Statistics of one transition.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DrawStats {
    pub treedepth: u32,
    pub n_leapfrog: u32,
    pub divergent: bool,
    pub accept_stat: f64,
    pub stepsize: f64,
    pub energy: f64,
}

/// One leapfrog step of size `eps` (negative integrates backwards). A failed
/// density evaluation returns `None`.
pub fn leapfrog(target: &(impl Posterior + ?Sized), z: &Point, eps: f64, metric: &Metric) -> Option<Point> {
    let n = z.q.len();
    let mut p = z.p.clone();
    for i in 0..n {
        p[i] += 0.5 * eps * z.grad[i];
    }
    let v = metric.velocity(&p);
    let q: Vec<f64> = z.q.iter().zip(&v).map(|(q, v)| q + eps * v).collect();
    let mut grad = vec![0.0; n];
    let logp = target.log_density_grad(&q, &mut grad).ok()?;
    if !logp.is_finite() {
        return None;
    }
    for i in 0..n {
        p[i] += 0.5 * eps * grad[i];
    }
    Some(Point { q, p, grad, logp })
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn no_u_turn(v_minus: &[f64], v_plus: &[f64], rho: &[f64]) -> bool {
    let dot = |a: &[f64]| a.iter().zip(rho).map(|(x, y)| x * y).sum::<f64>();
    dot(v_minus) > 0.0 && dot(v_plus) > 0.0
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// A subtree in the order it was integrated: `first` is adjacent to the
/// point it grew from, `last` is the outer edge.
struct Subtree {
    first: Point,
    last: Point,
    proposal: Point,
    rho: Vec<f64>,
    log_sum_weight: f64,
}

struct Walk<'a, T: Posterior + ?Sized, R: Rng + ?Sized> {
    target: &'a T,
    metric: &'a Metric,
    eps: f64,
    h0: f64,
    rng: &'a mut R,
    n_leapfrog: u32,
    sum_metro_prob: f64,
    divergent: bool,
}

impl<T: Posterior + ?Sized, R: Rng + ?Sized> Walk<'_, T, R> {
    /// Builds `2^depth` new points beyond `edge`. `None` means the subtree
    /// diverged or turned around and must be discarded.
    fn build(&mut self, edge: &Point, depth: u32) -> Option<Subtree> {
        if depth == 0 {
            self.n_leapfrog += 1;
            let next = match leapfrog(self.target, edge, self.eps, self.metric) {
                Some(z) => z,
                None => {
                    self.divergent = true;
                    return None;
                }
            };
            let h = next.hamiltonian(self.metric);
            let h = if h.is_nan() { f64::INFINITY } else { h };
            if h - self.h0 > DIVERGENCE_THRESHOLD {
                self.divergent = true;
                return None;
            }
            let log_w = self.h0 - h;
            self.sum_metro_prob += if log_w > 0.0 { 1.0 } else { log_w.exp() };
            return Some(Subtree {
                rho: next.p.clone(),
                first: next.clone(),
                last: next.clone(),
                proposal: next,
                log_sum_weight: log_w,
            });
        }
        let inner = self.build(edge, depth - 1)?;
        let outer = self.build(&inner.last, depth - 1)?;
        let log_sum_weight = log_sum_exp(inner.log_sum_weight, outer.log_sum_weight);
        let take_outer = self.rng.random::<f64>().ln() < outer.log_sum_weight - log_sum_weight;
        let rho = add(&inner.rho, &outer.rho);
        let m = self.metric;
        let mut ok = no_u_turn(&inner.first.velocity(m), &outer.last.velocity(m), &rho);
        ok &= no_u_turn(
            &inner.first.velocity(m),
            &outer.first.velocity(m),
            &add(&inner.rho, &outer.first.p),
        );
        ok &= no_u_turn(
            &inner.last.velocity(m),
            &outer.last.velocity(m),
            &add(&outer.rho, &inner.last.p),
        );
        if !ok {
            return None;
        }
        Some(Subtree {
            first: inner.first,
            last: outer.last,
            proposal: if take_outer { outer.proposal } else { inner.proposal },
            rho,
            log_sum_weight,
        })
    }
}

/// One NUTS transition from position `start`.
pub fn transition<T, R>(
    target: &T,
    start: &Point,
    eps: f64,
    metric: &Metric,
    max_treedepth: u32,
    rng: &mut R,
) -> (Point, DrawStats)
where
    T: Posterior + ?Sized,
    R: Rng + ?Sized,
{
    let mut z0 = start.clone();
    z0.p = metric.sample_momentum(rng);
    let h0 = z0.hamiltonian(metric);

    let mut bwd = z0.clone();
    let mut fwd = z0.clone();
    let mut rho = z0.p.clone();
    let mut sample = z0.clone();
    let mut log_sum_weight = 0.0;
    let mut depth = 0;

    let mut walk = Walk {
        target,
        metric,
        eps,
        h0,
        rng,
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
    };

    while depth < max_treedepth {
        let forward = walk.rng.random::<bool>();
        walk.eps = if forward { eps } else { -eps };
        let edge = if forward { fwd.clone() } else { bwd.clone() };
        let Some(sub) = walk.build(&edge, depth) else {
            break;
        };
        depth += 1;

        if sub.log_sum_weight > log_sum_weight
            || walk.rng.random::<f64>() < (sub.log_sum_weight - log_sum_weight).exp()
        {
            sample = sub.proposal.clone();
        }
        log_sum_weight = log_sum_exp(log_sum_weight, sub.log_sum_weight);

        // Order the two halves along the trajectory: `left` ends where
        // `right` begins.
        let m = metric;
        let old_rho = rho.clone();
        rho = add(&rho, &sub.rho);
        let (left_first_v, left_last, right_first, right_last_v, rho_left, rho_right);
        if forward {
            left_first_v = bwd.velocity(m);
            left_last = fwd.clone();
            right_first = sub.first.clone();
            right_last_v = sub.last.velocity(m);
            rho_left = old_rho;
            rho_right = sub.rho.clone();
            fwd = sub.last;
        } else {
            left_first_v = sub.last.velocity(m);
            left_last = sub.first.clone();
            right_first = bwd.clone();
            right_last_v = fwd.velocity(m);
            rho_left = sub.rho.clone();
            rho_right = old_rho;
            bwd = sub.last;
        }
        let mut ok = no_u_turn(&left_first_v, &right_last_v, &rho);
        ok &= no_u_turn(&left_first_v, &right_first.velocity(m), &add(&rho_left, &right_first.p));
        ok &= no_u_turn(&left_last.velocity(m), &right_last_v, &add(&rho_right, &left_last.p));
        if !ok {
            break;
        }
    }

    let n = walk.n_leapfrog.max(1);
    let stats = DrawStats {
        treedepth: depth,
        n_leapfrog: walk.n_leapfrog,
        divergent: walk.divergent,
        accept_stat: walk.sum_metro_prob / n as f64,
        stepsize: eps,
        energy: sample.hamiltonian(metric),
    };
    (sample, stats)
}
