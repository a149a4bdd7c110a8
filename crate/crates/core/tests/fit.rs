use lowfr::cqr::{CqrModel, CqrTerm};
use lowfr::data::ExposureDataset;
use lowfr::fit::{
    choose_k, cqr_coefficients, crossval, fit, fold_assignment, in_sample_mse, FitConfig, KChoice, ModelKind,
};
use lowfr::model::Posterior;
use lowfr::sampler::SamplerConfig;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn quick(seed: u64) -> SamplerConfig {
    SamplerConfig {
        chains: 2,
        warmup: 300,
        samples: 300,
        seed,
        ..SamplerConfig::default()
    }
}

/// `y = 1 + Σ α_c x_c + N(0, noise²)` with standard normal exposures.
fn linear_data(seed: u64, n: usize, alpha: &[f64], noise: f64) -> ExposureDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = alpha.len();
    let x: Vec<f64> = (0..n * w).map(|_| rng.sample(StandardNormal)).collect();
    let y = (0..n)
        .map(|i| {
            let e: f64 = rng.sample(StandardNormal);
            1.0 + (0..w).map(|c| alpha[c] * x[i * w + c]).sum::<f64>() + noise * e
        })
        .collect();
    ExposureDataset::complete(y, 2, w / 2, x).unwrap()
}

#[test]
fn model_and_k_parse_round_trip() {
    for m in [ModelKind::LowFr, ModelKind::Cqr, ModelKind::Direct] {
        assert_eq!(m.to_string().parse::<ModelKind>().unwrap(), m);
    }
    assert!("lasso".parse::<ModelKind>().is_err());
    assert_eq!("auto".parse::<KChoice>().unwrap(), KChoice::Auto);
    assert_eq!("3".parse::<KChoice>().unwrap(), KChoice::Fixed(3));
    assert!("0".parse::<KChoice>().is_err());
    assert!("-1".parse::<KChoice>().is_err());
}

#[test]
fn fixed_k_must_fit_the_exposure_count() {
    let data = linear_data(1, 20, &[0.0; 6], 1.0);
    assert_eq!(choose_k(&data, KChoice::Fixed(2)).unwrap(), 2);
    assert!(choose_k(&data, KChoice::Fixed(3)).is_err());
    let k = choose_k(&data, KChoice::Auto).unwrap();
    assert!((1..=2).contains(&k));
}

#[test]
fn cqr_quadratic_form_reproduces_the_design_predictor() {
    let data = linear_data(2, 30, &[0.5, -0.2, 0.1, 0.0], 1.0);
    let model = CqrModel::new(&data).unwrap();
    let layout = model.layout().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let u: Vec<f64> = (0..layout.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let draw = layout.to_constrained(&u).unwrap();
        let ic = cqr_coefficients(&model, &draw, data.p(), data.times());
        let theta = model.coefficients(&draw);
        for i in 0..data.n() {
            let x = data.x_row(i);
            let mut want = draw[0];
            for (term, &c) in model.design().terms.iter().zip(theta) {
                want += c * match *term {
                    CqrTerm::Main { j, t } => x[j * data.times() + t],
                    CqrTerm::Int { j1, j2, t1, t2 } => x[j1 * data.times() + t1] * x[j2 * data.times() + t2],
                };
            }
            assert!((ic.mean_at(x) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn direct_fit_recovers_least_squares() {
    let alpha = [0.8, -0.5, 0.3, 0.0, 0.2, -0.1];
    let data = linear_data(4, 200, &alpha, 0.3);
    let cfg = FitConfig {
        model: ModelKind::Direct,
        sampler: quick(4),
        ..FitConfig::default()
    };
    let f = fit(&data, &cfg).unwrap();
    // Ordinary least squares with an intercept as the oracle.
    let (n, w) = (data.n(), data.width());
    let design = DMatrix::from_fn(n, w + 1, |i, c| if c == 0 { 1.0 } else { data.x_row(i)[c - 1] });
    let y = DVector::from_column_slice(data.y());
    let ols = (design.transpose() * &design).try_inverse().unwrap() * design.transpose() * y;
    for c in 0..w {
        let post: f64 = f.coefficients.iter().map(|ic| ic.alpha[c]).sum::<f64>() / f.coefficients.len() as f64;
        assert!((post - ols[c + 1]).abs() < 0.03, "column {c}: {post} vs {}", ols[c + 1]);
    }
    assert!(f.coefficients.iter().all(|ic| ic.gamma.max_abs() == 0.0));
    assert!(f.imputed().is_empty());
    assert_eq!(f.coefficient_names().len(), 1 + w + w * (w + 1) / 2);
}

#[test]
fn folds_partition_subjects_evenly_and_deterministically() {
    let a = fold_assignment(53, 5, 9).unwrap();
    assert_eq!(a, fold_assignment(53, 5, 9).unwrap());
    assert_ne!(a, fold_assignment(53, 5, 10).unwrap());
    let mut sizes = [0usize; 5];
    a.iter().for_each(|&f| sizes[f] += 1);
    assert!(sizes.iter().all(|&s| s == 10 || s == 11), "{sizes:?}");
    assert!(fold_assignment(53, 1, 9).is_err());
    assert!(fold_assignment(9, 5, 9).is_err());
}

#[test]
fn crossval_of_pure_noise_reaches_the_noise_floor() {
    // y carries no signal, so out-of-sample MSE should sit near the noise
    // variance plus the small cost of estimating the mean and null slopes.
    let data = linear_data(5, 120, &[0.0; 4], 0.5);
    let cfg = FitConfig {
        model: ModelKind::Direct,
        sampler: quick(5),
        ..FitConfig::default()
    };
    let cv = crossval(&data, &cfg, 4, 5).unwrap();
    assert!(cv.predictions.iter().all(|p| p.is_finite()));
    assert!(cv.mse > 0.15 && cv.mse < 0.4, "{}", cv.mse);
    assert_eq!(cv.fold_mse.len(), 4);
    let full = fit(&data, &cfg).unwrap();
    let ins = in_sample_mse(&full, &data);
    assert!(ins <= cv.mse, "{ins} vs {}", cv.mse);
    assert_eq!(cv, crossval(&data, &cfg, 4, 5).unwrap());
}
