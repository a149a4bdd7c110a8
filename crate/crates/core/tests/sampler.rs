use lowfr::linalg::CompoundSymmetric;
use lowfr::model::{ParamLayout, Posterior, Transform};
use lowfr::linalg::DenseMatrix;
use lowfr::sampler::{
    ess, leapfrog, run_chains, split_rhat, transition, EssMode, Metric, MetricKind, Point, SamplerConfig,
};
use lowfr::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Gaussian {
    layout: ParamLayout,
    cs: CompoundSymmetric<f64>,
}

impl Gaussian {
    fn new(dim: usize, rho: f64) -> Self {
        let mut layout = ParamLayout::new();
        layout.push("x", &[dim], Transform::Identity);
        Self {
            layout,
            cs: CompoundSymmetric::new(dim, rho).unwrap(),
        }
    }
}

impl Posterior for Gaussian {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }
    fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let g = self.cs.inverse_apply(u);
        for (o, v) in grad.iter_mut().zip(&g) {
            *o = -v;
        }
        Ok(-0.5 * self.cs.inverse_quad_form(u))
    }
}

struct Flat(ParamLayout);

impl Posterior for Flat {
    fn layout(&self) -> &ParamLayout {
        &self.0
    }
    fn log_density_grad(&self, _u: &[f64], grad: &mut [f64]) -> Result<f64> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        Ok(0.0)
    }
}

fn config(chains: usize, warmup: usize, samples: usize, seed: u64) -> SamplerConfig {
    SamplerConfig {
        chains,
        warmup,
        samples,
        seed,
        ..SamplerConfig::default()
    }
}

#[test]
fn standard_normal_moments_and_ess() {
    let target = Gaussian::new(10, 0.0);
    let draws = run_chains(&target, &config(4, 500, 1250, 3)).unwrap();
    for i in 0..10 {
        let all: Vec<f64> = draws.iter_draws().map(|d| d[i]).collect();
        let m = lowfr::stats::mean(&all);
        let v = lowfr::stats::variance(&all);
        assert!(m.abs() < 0.05, "mean {m}");
        assert!((v - 1.0).abs() < 0.1, "var {v}");
        let e = ess(&draws.param_chains(i), EssMode::Bulk);
        assert!(e > 0.4 * 5000.0, "ess {e}");
    }
}

#[test]
fn correlated_gaussian_calibration() {
    let target = Gaussian::new(10, 0.8);
    let cfg = SamplerConfig {
        metric: MetricKind::Dense,
        ..config(1, 1000, 1000, 5)
    };
    let draws = run_chains(&target, &cfg).unwrap();
    let acc = draws.mean_accept_stat();
    assert!((acc - 0.8).abs() < 0.1, "accept {acc}");
    for i in 0..10 {
        let chains = draws.param_chains(i);
        let e = ess(&chains, EssMode::Bulk);
        assert!(e > 400.0, "ess {e}");
        let se = lowfr::stats::variance(&chains[0]).sqrt() / e.sqrt();
        assert!(lowfr::stats::mean(&chains[0]).abs() < 3.0 * se);
    }
}

#[test]
fn same_seed_is_bitwise_identical_regardless_of_threads() {
    let target = Gaussian::new(3, 0.5);
    let cfg = config(3, 100, 100, 17);
    let a = run_chains(&target, &cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| run_chains(&target, &cfg).unwrap());
    let a_vals: Vec<u64> = a.iter_draws().flatten().map(|v| v.to_bits()).collect();
    let b_vals: Vec<u64> = b.iter_draws().flatten().map(|v| v.to_bits()).collect();
    assert_eq!(a_vals, b_vals);
    let c = run_chains(&target, &config(3, 100, 100, 18)).unwrap();
    assert_ne!(a.draw(0, 0), c.draw(0, 0));
}

#[test]
fn flat_target_has_no_drift() {
    let target = Flat({
        let mut l = ParamLayout::new();
        l.push("x", &[1], Transform::Identity);
        l
    });
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut z = Point::new(&target, vec![0.0]).unwrap();
    let mut steps = Vec::new();
    for _ in 0..1000 {
        let (next, _) = transition(&target, &z, 0.5, &Metric::diag(vec![1.0]), 4, &mut rng);
        steps.push(next.q[0] - z.q[0]);
        z = next;
    }
    let drift: f64 = steps.iter().sum();
    let se = (steps.iter().map(|d| d * d).sum::<f64>()).sqrt();
    assert!(drift.abs() < 3.0 * se, "drift {drift}, se {se}");
}

#[test]
fn leapfrog_is_reversible() {
    let target = Gaussian::new(5, 0.6);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dense = DenseMatrix::from_fn(5, 5, |i, j| if i == j { 1.0 + i as f64 * 0.2 } else { 0.3 });
    let metrics = [
        Metric::diag(vec![1.0, 0.5, 2.0, 1.0, 0.8]),
        Metric::dense(dense).unwrap(),
    ];
    for metric in &metrics {
        let q: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
        let mut z = Point::new(&target, q).unwrap();
        z.p = metric.sample_momentum(&mut rng);
        let start = z.clone();
        for _ in 0..25 {
            z = leapfrog(&target, &z, 0.1, metric).unwrap();
        }
        for _ in 0..25 {
            z = leapfrog(&target, &z, -0.1, metric).unwrap();
        }
        for (a, b) in z.q.iter().zip(&start.q).chain(z.p.iter().zip(&start.p)) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn dense_momentum_has_metric_covariance() {
    let inv = DenseMatrix::from_rows(&[vec![2.0, 0.6], vec![0.6, 1.0]]).unwrap();
    let mass = inv.inverse_spd().unwrap();
    let metric = Metric::dense(inv).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 200_000;
    let mut s = [0.0; 3];
    for _ in 0..n {
        let p = metric.sample_momentum(&mut rng);
        s[0] += p[0] * p[0];
        s[1] += p[0] * p[1];
        s[2] += p[1] * p[1];
    }
    let est = [s[0] / n as f64, s[1] / n as f64, s[2] / n as f64];
    let want = [mass[(0, 0)], mass[(0, 1)], mass[(1, 1)]];
    for (e, w) in est.iter().zip(&want) {
        assert!((e - w).abs() < 0.02, "{e} vs {w}");
    }
}

#[test]
fn energy_error_is_second_order() {
    let target = Gaussian::new(4, 0.3);
    let metric = Metric::diag(vec![1.0; 4]);
    let mean_abs_dh = |eps: f64| {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut total = 0.0;
        for _ in 0..200 {
            let q: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let mut z = Point::new(&target, q).unwrap();
            z.p = metric.sample_momentum(&mut rng);
            let h0 = z.hamiltonian(&metric);
            let steps = (1.0 / eps).round() as usize;
            for _ in 0..steps {
                z = leapfrog(&target, &z, eps, &metric).unwrap();
            }
            total += (z.hamiltonian(&metric) - h0).abs();
        }
        total / 200.0
    };
    let ratio = mean_abs_dh(0.1) / mean_abs_dh(0.05);
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

fn iid(rng: &mut ChaCha8Rng, chains: usize, n: usize) -> Vec<Vec<f64>> {
    (0..chains).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

#[test]
fn rhat_reference_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let c: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
    let r = split_rhat(&[c.clone(), c.clone()]);
    assert!((r - 1.0).abs() < 0.001, "{r}");

    let mut chains = iid(&mut rng, 2, 1000);
    chains[1].iter_mut().for_each(|v| *v += 10.0);
    assert!(split_rhat(&chains) > 2.0);

    let mut good = 0;
    for _ in 0..100 {
        if split_rhat(&iid(&mut rng, 4, 1000)) < 1.01 {
            good += 1;
        }
    }
    assert!(good >= 99, "{good}");

    assert!(split_rhat(&[vec![1.0; 10], vec![1.0; 10]]).is_nan());
    assert!(ess(&[vec![2.0; 10]], EssMode::Bulk).is_nan());
}

#[test]
fn ess_reference_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let chains = iid(&mut rng, 4, 2500);
    let n = 10_000.0;
    let e = ess(&chains, EssMode::Bulk);
    assert!((e - n).abs() < 0.15 * n, "iid {e}");

    let ar: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            let mut x = 0.0;
            (0..25_000)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    x = 0.9 * x + z;
                    x
                })
                .collect()
        })
        .collect();
    let total = 100_000.0;
    let expected = total * 0.1 / 1.9;
    let e = ess(&ar, EssMode::Bulk);
    assert!((e - expected).abs() < 0.25 * expected, "ar1 {e} vs {expected}");

    // Antithetic pairs: each draw is followed by its negation.
    let alt: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            (0..500)
                .flat_map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    [z, -z]
                })
                .collect()
        })
        .collect();
    let e = ess(&alt, EssMode::Bulk);
    assert!(e > 4000.0 && e <= 40_000.0, "alternating {e}");
    let t = ess(&chains, EssMode::Tail);
    assert!(t > 0.5 * n, "tail {t}");
}
