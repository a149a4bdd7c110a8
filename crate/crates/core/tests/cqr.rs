use lowfr::cqr::{build_design, conditional_coefficient_mean, cqr_prior_covariance, CqrModel, CqrTerm};
use lowfr::data::ExposureDataset;
use lowfr::linalg::DenseMatrix;
use lowfr::model::{Posterior, Transform};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, InverseGamma, Normal};

fn dataset(seed: u64, n: usize, p: usize, tt: usize) -> ExposureDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * p * tt).map(|_| rng.random_range(-1.5..1.5)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ExposureDataset::complete(y, p, tt, x).unwrap()
}

fn ln_mvn(x: &[f64], cov: &DenseMatrix<f64>) -> f64 {
    let inv = cov.inverse_lu().unwrap();
    -0.5 * (x.len() as f64 * (2.0 * std::f64::consts::PI).ln() + cov.det().unwrap().ln() + inv.quad_form(x).unwrap())
}

fn oracle(model: &CqrModel, data: &ExposureDataset, u: &[f64]) -> f64 {
    let layout = model.layout();
    let v = layout.to_constrained(u).unwrap();
    let get = |n: &str| v[layout.range(n).unwrap()].to_vec();
    let mut lp = 0.0;
    for b in layout.blocks() {
        for i in b.range() {
            lp += match b.transform {
                Transform::Identity => 0.0,
                Transform::Log => u[i],
                Transform::Logit => (v[i] * (1.0 - v[i])).ln(),
            };
        }
    }
    let n10 = Normal::new(0.0, 10f64.sqrt()).unwrap();
    lp += n10.ln_pdf(get("mu")[0]);
    let ig = InverseGamma::new(1.0, 1.0).unwrap();
    for name in ["sigma2", "nu_main", "nu_int"] {
        lp += ig.ln_pdf(get(name)[0]);
    }
    let prior = cqr_prior_covariance(
        data.p(),
        data.times(),
        get("nu_main")[0],
        get("nu_int")[0],
        get("psi_main")[0],
        get("psi_int")[0],
    )
    .unwrap();
    let coef: Vec<f64> = get("theta").into_iter().chain(get("gamma")).collect();
    lp += ln_mvn(&coef, &prior.to_dense());
    let sd = get("sigma2")[0].sqrt();
    for i in 0..data.n() {
        let row = model.design().matrix.row(i);
        let mean = get("mu")[0] + coef.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
        lp += Normal::new(mean, sd).unwrap().ln_pdf(data.y()[i]);
    }
    lp
}

pub fn max_rel_grad_error(model: &dyn Posterior, u: &[f64]) -> f64 {
    let mut g = vec![0.0; u.len()];
    model.log_density_grad(u, &mut g).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut up = u.to_vec();
    for i in 0..u.len() {
        up[i] = u[i] + h;
        let fp = model.log_density(&up).unwrap();
        up[i] = u[i] - h;
        let fm = model.log_density(&up).unwrap();
        up[i] = u[i];
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((g[i] - fd).abs() / fd.abs().max(1.0));
    }
    worst
}

#[test]
fn density_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (n, p, tt) in [(12, 2, 2), (0, 3, 2), (8, 1, 3)] {
        let data = dataset(n as u64 + 1, n, p, tt);
        let model = CqrModel::new(&data).unwrap();
        for _ in 0..3 {
            let u: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = model.log_density(&u).unwrap();
            let b = oracle(&model, &data, &u);
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn independence_limit_matches_independent_normals() {
    let data = dataset(5, 6, 2, 2);
    let model = CqrModel::new(&data).unwrap();
    let layout = model.layout();
    let mut u = vec![0.3; model.dim()];
    u[layout.range("psi_main").unwrap().start] = -40.0;
    u[layout.range("psi_int").unwrap().start] = -40.0;
    let v = layout.to_constrained(&u).unwrap();
    let mut expected = oracle(&model, &data, &u);
    // Replace the correlated prior by independent normals with the same variances.
    let coef: Vec<f64> = v[layout.range("theta").unwrap().start..layout.range("gamma").unwrap().end].to_vec();
    let prior = cqr_prior_covariance(2, 2, v[layout.range("nu_main").unwrap().start], v[layout.range("nu_int").unwrap().start], v[layout.range("psi_main").unwrap().start], v[layout.range("psi_int").unwrap().start]).unwrap();
    expected -= ln_mvn(&coef, &prior.to_dense());
    let diag = prior.to_dense();
    for (e, c) in coef.iter().enumerate() {
        expected += Normal::new(0.0, diag[(e, e)].sqrt()).unwrap().ln_pdf(*c);
    }
    assert!((model.log_density(&u).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn gradient_at_random_points() {
    let data = dataset(7, 15, 3, 2);
    let model = CqrModel::new(&data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let u: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(max_rel_grad_error(&model, &u) < 1e-4);
    }
}

#[test]
fn prior_blocks_positive_definite_up_to_boundary() {
    for psi in [0.0, 0.3, 0.9, 0.999, 1.0 - 1e-6] {
        let c = cqr_prior_covariance(3, 3, 1.0, 0.5, psi, psi).unwrap();
        for b in c.main.iter().chain(&c.int) {
            assert!(b.to_dense().is_positive_definite(), "psi {psi}");
        }
    }
}

#[test]
fn strong_correlation_pools_block_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n, p, tt) = (150, 2, 3);
    let x: Vec<f64> = (0..n * p * tt).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let r = &x[i * p * tt..(i + 1) * p * tt];
            0.5 * r[0] - 0.2 * r[4] + 0.3 * r[1] * r[3] + 0.1 * rng.random_range(-1.0..1.0)
        })
        .collect();
    let design = build_design(&x, n, p, tt).unwrap();
    let psi = 1.0 - 1e-9;
    let prior = cqr_prior_covariance(p, tt, 1.0, 1.0, psi, psi).unwrap();
    let mean = conditional_coefficient_mean(&design, &y, 0.01, &prior).unwrap();
    let coef = &mean[1..];
    for block in design.main_blocks() {
        let v = &coef[block];
        let spread = v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-2, "{v:?}");
    }
    let off = design.n_main();
    for block in design.int_blocks() {
        let v = &coef[off + block.start..off + block.end];
        let spread = v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-2, "{v:?}");
    }
}

proptest! {
    #[test]
    fn canonical_interaction_is_symmetric(ja in 0usize..5, ta in 0usize..4, jb in 0usize..5, tb in 0usize..4) {
        prop_assume!((ja, ta) != (jb, tb));
        let a = CqrTerm::interaction(ja, ta, jb, tb);
        let b = CqrTerm::interaction(jb, tb, ja, ta);
        prop_assert_eq!(a, b);
        let x: Vec<f64> = (0..20).map(|e| (e as f64 * 0.37).sin()).collect();
        let d = build_design(&x, 1, 5, 4).unwrap();
        let col = d.terms.iter().position(|t| *t == a).unwrap();
        prop_assert!((d.matrix[(0, col)] - x[ja * 4 + ta] * x[jb * 4 + tb]).abs() < 1e-15);
    }
}
