use lowfr::linalg::{kron, kron_trace_product, CompoundSymmetric, DenseMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix<f64> {
    let a = random(n, n, rng);
    let mut m = a.matmul(&a.transpose()).unwrap();
    for i in 0..n {
        m[(i, i)] += n as f64 * 0.1 + 0.5;
    }
    m
}

fn to_na(m: &DenseMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn max_diff_na(a: &DenseMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (to_na(a) - b).abs().max()
}

#[test]
fn cs_inverse_is_exact_over_grid() {
    for tt in 2..=8 {
        for step in 0..=9 {
            let phi = step as f64 / 10.0;
            let cs = CompoundSymmetric::new(tt, phi).unwrap();
            let prod = cs.inverse().matmul(&cs.to_dense()).unwrap();
            assert!(prod.max_abs_diff(&DenseMatrix::identity(tt)) < 1e-12, "T={tt} phi={phi}");
            let lu = to_na(&cs.to_dense()).try_inverse().unwrap();
            assert!(max_diff_na(&cs.inverse(), &lu) < 1e-12);
        }
    }
}

#[test]
fn cs_inverse_closed_form_examples() {
    let inv = CompoundSymmetric::new(2, 0.5).unwrap().inverse();
    let want = DenseMatrix::from_rows(&[vec![4.0 / 3.0, -2.0 / 3.0], vec![-2.0 / 3.0, 4.0 / 3.0]]).unwrap();
    assert!(inv.max_abs_diff(&want) < 1e-15);
    let id = CompoundSymmetric::new(3, 0.0).unwrap().inverse();
    assert_eq!(id, DenseMatrix::identity(3));
    assert!(CompoundSymmetric::new(3, -0.6).is_err());
    assert!(CompoundSymmetric::new(3, 1.0).is_err());
}

#[test]
fn kron_inverse_factorizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=4 {
        for tt in [2, 3, 5] {
            let m = random_spd(n, &mut rng);
            let cs = CompoundSymmetric::new(tt, rng.random_range(0.0..0.9)).unwrap();
            let dense = kron(&m, &cs.to_dense()).unwrap();
            let direct = to_na(&dense).try_inverse().unwrap();
            let structured = kron(&m.inverse_spd().unwrap(), &cs.inverse()).unwrap();
            assert!(max_diff_na(&structured, &direct) < 1e-10);
        }
    }
}

#[test]
fn trace_product_matches_explicit_assembly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (b, v) = (random(3, 3, &mut rng), random(3, 3, &mut rng));
        let (w, phi) = (random(2, 2, &mut rng), random(2, 2, &mut rng));
        let explicit = (to_na(&kron(&b, &w).unwrap()) * to_na(&kron(&v, &phi).unwrap())).trace();
        assert!((kron_trace_product(&b, &v, &w, &phi).unwrap() - explicit).abs() < 1e-12);
    }
    assert!(kron_trace_product(&random(2, 3, &mut rng), &random(3, 3, &mut rng), &random(2, 2, &mut rng), &random(2, 2, &mut rng)).is_err());
}

#[test]
fn cholesky_solve_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [1, 2, 5, 17, 40, 60] {
        let m = random_spd(n, &mut rng);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = m.solve_spd(&b).unwrap();
        let r = m.matvec(&x).unwrap();
        let worst = r.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-10, "n={n} residual {worst}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixed_product_property(seed in 0u64..1_000_000, dims in prop::array::uniform5(1usize..4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [ar, ac, br, bc, cc] = dims;
        let dc = 1 + (seed % 3) as usize;
        let a = random(ar, ac, &mut rng);
        let b = random(br, bc, &mut rng);
        let c = random(ac, cc, &mut rng);
        let d = random(bc, dc, &mut rng);
        let lhs = kron(&a, &b).unwrap().matmul(&kron(&c, &d).unwrap()).unwrap();
        let rhs = kron(&a.matmul(&c).unwrap(), &b.matmul(&d).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn kron_matches_nalgebra(seed in 0u64..1_000_000, r in 1usize..4, c in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(r, c, &mut rng);
        let b = random(c, r + 1, &mut rng);
        let ours = kron(&a, &b).unwrap();
        prop_assert!(max_diff_na(&ours, &to_na(&a).kronecker(&to_na(&b))) == 0.0);
    }

    #[test]
    fn cs_inverse_apply_matches_dense(tt in 1usize..9, phi in 0.0f64..0.95, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cs = CompoundSymmetric::new(tt, phi).unwrap();
        let v: Vec<f64> = (0..tt).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = cs.inverse_apply(&v);
        let want = cs.inverse().matvec(&v).unwrap();
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
    }
}
