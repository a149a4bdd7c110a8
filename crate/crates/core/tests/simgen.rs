use lowfr::induced::{induced_from_parts, InducedCoefficients};
use lowfr::linalg::DenseMatrix;
use lowfr::simgen::{gen_intro, gen_scenario, random_mask, truth_cumulative, Generating, Scenario, ScenarioDims};
use proptest::prelude::*;

fn empirical_cov(rows: &[f64], width: usize) -> DenseMatrix<f64> {
    let n = rows.len() / width;
    let mut c = DenseMatrix::zeros(width, width);
    for r in rows.chunks(width) {
        for i in 0..width {
            for j in 0..width {
                c[(i, j)] += r[i] * r[j];
            }
        }
    }
    c.scale(1.0 / n as f64)
}

#[test]
fn intro_rank1_coefficients() {
    let (_, truth) = gen_intro(1, 10, 1).unwrap();
    // Exposure 2, time 3.
    assert_eq!(truth.coefficients.alpha[3 + 2], 1.5);
    assert_eq!(truth.coefficients.gamma.max_abs(), 0.0);
    let (_, t2) = gen_intro(2, 10, 1).unwrap();
    // Exposure 4, time 1: ω_2[0]·β_2[3] = 0.8·(−1).
    assert!((t2.coefficients.alpha[9] + 0.8).abs() < 1e-15);
    assert!(gen_intro(3, 10, 1).is_err());
}

#[test]
fn intro_exposure_covariance() {
    let (data, _) = gen_intro(1, 100_000, 2).unwrap();
    let c = empirical_cov(data.x(), 15);
    for i in 0..15 {
        for j in 0..15 {
            let want = if i == j {
                1.0
            } else if i / 3 == j / 3 {
                0.7
            } else {
                0.0
            };
            assert!((c[(i, j)] - want).abs() < 0.02, "({i},{j}) {}", c[(i, j)]);
        }
    }
}

#[test]
fn generators_are_deterministic() {
    for s in Scenario::ALL {
        let (a, ta) = gen_scenario(s, 7, ScenarioDims::default()).unwrap();
        let (b, tb) = gen_scenario(s, 7, ScenarioDims::default()).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());
        assert_eq!(ta.coefficients, tb.coefficients);
        let (c, _) = gen_scenario(s, 8, ScenarioDims::default()).unwrap();
        assert_ne!(a.y(), c.y());
    }
}

#[test]
fn scenario1_structure_and_truth() {
    let (data, truth) = gen_scenario(Scenario::S1, 3, ScenarioDims::default()).unwrap();
    assert_eq!((data.n(), data.p(), data.times()), (200, 10, 3));
    let Generating::Factor {
        lambda,
        sigma2,
        phi,
        beta,
        omega,
        b,
        w,
        theta,
        ..
    } = &truth.generating
    else {
        panic!("factor truth expected");
    };
    assert_eq!(b.as_slice().iter().filter(|v| **v != 0.0).count(), 3);
    assert_eq!(beta.as_slice().iter().filter(|v| **v != 0.0).count(), 2);
    for v in b.as_slice().iter().chain(beta.as_slice()).filter(|v| **v != 0.0) {
        assert!((1.0..2.0).contains(&v.abs()));
    }
    let s: f64 = omega.row(0).iter().sum();
    assert!((s - 1.0).abs() < 1e-12 && omega.row(0).iter().all(|v| *v >= 0.0));
    let s: f64 = w.as_slice().iter().sum();
    assert!((s - 1.0).abs() < 1e-12 && w.as_slice().iter().all(|v| *v >= 0.0));
    let again = induced_from_parts(0.0, theta, b, w, lambda, sigma2, phi).unwrap();
    assert_eq!(again, truth.coefficients);

    let (_, t2) = gen_scenario(Scenario::S2, 3, ScenarioDims::default()).unwrap();
    let Generating::Factor { beta, omega, .. } = &t2.generating else {
        panic!()
    };
    assert_eq!((beta.rows(), omega.rows()), (2, 2));
}

#[test]
fn scenario1_factor_covariance() {
    let dims = ScenarioDims {
        n: 100_000,
        ..ScenarioDims::default()
    };
    let (_, truth) = gen_scenario(Scenario::S1, 4, dims).unwrap();
    let Generating::Factor { eta, phi, .. } = &truth.generating else {
        panic!()
    };
    let (k, tt) = (5, 3);
    let c = empirical_cov(eta, k * tt);
    let phi = phi.to_dense();
    for i in 0..k * tt {
        for j in 0..k * tt {
            let want = if i / tt == j / tt { phi[(i % tt, j % tt)] } else { 0.0 };
            assert!((c[(i, j)] - want).abs() < 0.02);
        }
    }
}

#[test]
fn scenario3_structure() {
    let (data, truth) = gen_scenario(Scenario::S3, 5, ScenarioDims::default()).unwrap();
    let tt = data.times();
    let nonzero_main = truth.coefficients.alpha.iter().filter(|v| **v != 0.0).count();
    assert_eq!(nonzero_main, 4 * tt);
    let Generating::Kronecker { pairs, .. } = &truth.generating else {
        panic!()
    };
    assert_eq!(pairs.len(), 10);
    let g = &truth.coefficients.gamma;
    let upper_nonzero = (0..g.rows())
        .flat_map(|a| (a..g.rows()).map(move |b| (a, b)))
        .filter(|&(a, b)| g[(a, b)] != 0.0)
        .count();
    assert_eq!(upper_nonzero, 10 * tt);
    for &(a, b) in pairs {
        for t in 0..tt {
            let v = truth.coefficients.interaction(a * tt + t, b * tt + t).abs();
            assert!(v > 0.0 && v < 0.2);
        }
    }
}

#[test]
fn cumulative_truth_cases() {
    let mut ic = InducedCoefficients::<f64>::zero(6);
    assert_eq!(truth_cumulative(&ic, 2, 3), vec![0.0, 0.0]);
    ic.alpha[3..6].copy_from_slice(&[0.1, 0.2, 0.3]);
    let c = truth_cumulative(&ic, 2, 3);
    assert!((c[1] - 1.2).abs() < 1e-15);

    for s in [Scenario::S1, Scenario::S3] {
        let (_, truth) = gen_scenario(s, 6, ScenarioDims::default()).unwrap();
        let w = truth.p * truth.times;
        for j in 0..truth.p {
            let mut d = vec![0.0; w];
            d[j * truth.times..(j + 1) * truth.times].iter_mut().for_each(|v| *v = 1.0);
            let neg: Vec<f64> = d.iter().map(|v| -v).collect();
            let direct = truth.coefficients.mean_at(&d) - truth.coefficients.mean_at(&neg);
            assert!((direct - truth.cumulative[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn mask_is_seeded_and_sized() {
    let a = random_mask(6000, 0.1, 1);
    assert_eq!(a.len(), 600);
    assert_eq!(a, random_mask(6000, 0.1, 1));
    assert_ne!(a, random_mask(6000, 0.1, 2));
    assert!(a.windows(2).all(|w| w[0] < w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn dirichlet_draws_lie_on_simplex(seed in 0u64..1_000_000) {
        let dims = ScenarioDims { n: 2, ..ScenarioDims::default() };
        let (_, truth) = gen_scenario(Scenario::S2, seed, dims).unwrap();
        let Generating::Factor { omega, .. } = &truth.generating else { panic!() };
        for l in 0..omega.rows() {
            let s: f64 = omega.row(l).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(omega.row(l).iter().all(|v| *v >= 0.0));
        }
    }
}
