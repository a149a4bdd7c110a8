use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Kronecker product `a ⊗ b`: block `(i, j)` of the result is `a[i, j] · b`.
pub fn kron<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
    if a.rows() == 0 || a.cols() == 0 || b.rows() == 0 || b.cols() == 0 {
        return Err(Error::Dimension("kron of an empty matrix".into()));
    }
    let rows = a
        .rows()
        .checked_mul(b.rows())
        .ok_or_else(|| Error::Sizing("kron row count overflows".into()))?;
    let cols = a
        .cols()
        .checked_mul(b.cols())
        .ok_or_else(|| Error::Sizing("kron column count overflows".into()))?;
    rows.checked_mul(cols)
        .ok_or_else(|| Error::Sizing("kron entry count overflows".into()))?;
    let (br, bc) = (b.rows(), b.cols());
    Ok(DenseMatrix::from_fn(rows, cols, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    }))
}

/// `tr((B ⊗ W)(V ⊗ Φ)) = tr(BV) · tr(WΦ)` without forming either product.
pub fn kron_trace_product<S: Scalar>(
    b: &DenseMatrix<S>,
    v: &DenseMatrix<S>,
    w: &DenseMatrix<S>,
    phi: &DenseMatrix<S>,
) -> Result<S> {
    for (name, m) in [("B", b), ("V", v), ("W", w), ("Phi", phi)] {
        if !m.is_square() {
            return Err(Error::Dimension(format!("{name} must be square")));
        }
    }
    if b.rows() != v.rows() || w.rows() != phi.rows() {
        return Err(Error::Dimension("factors are not conformable".into()));
    }
    Ok(trace_of_product(b, v) * trace_of_product(w, phi))
}

/// `tr(XY)` for conformable square matrices.
fn trace_of_product<S: Scalar>(x: &DenseMatrix<S>, y: &DenseMatrix<S>) -> S {
    let n = x.rows();
    let mut acc = S::zero();
    for i in 0..n {
        for j in 0..n {
            acc += x[(i, j)] * y[(j, i)];
        }
    }
    acc
}

/// Correlation matrix with unit diagonal and a common off-diagonal value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompoundSymmetric<S> {
    dim: usize,
    offdiag: S,
}

impl<S: Scalar> CompoundSymmetric<S> {
    /// Fails unless `−1/(dim−1) < offdiag < 1`.
    pub fn new(dim: usize, offdiag: S) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("compound symmetric matrix needs dim >= 1".into()));
        }
        if !offdiag.is_finite() || offdiag >= S::one() {
            return Err(Error::Domain(format!("offdiag {offdiag} is outside the PD range")));
        }
        if dim > 1 {
            let lower = -S::one() / S::of_usize(dim - 1);
            if offdiag <= lower {
                return Err(Error::Domain(format!("offdiag {offdiag} is outside the PD range")));
            }
        }
        Ok(Self { dim, offdiag })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offdiag(&self) -> S {
        self.offdiag
    }

    pub fn to_dense(&self) -> DenseMatrix<S> {
        DenseMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i == j {
                S::one()
            } else {
                self.offdiag
            }
        })
    }

    /// Coefficients `(a, c)` with `Φ⁻¹ = a (I − c J)`.
    pub fn inverse_coefficients(&self) -> (S, S) {
        let phi = self.offdiag;
        let a = S::one() / (S::one() - phi);
        let c = phi / (S::one() + S::of_usize(self.dim - 1) * phi);
        (a, c)
    }

    /// Closed-form inverse `(1/(1−φ)) (I − φ/(1+(T−1)φ) J)`.
    pub fn inverse(&self) -> DenseMatrix<S> {
        let (a, c) = self.inverse_coefficients();
        DenseMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i == j {
                a * (S::one() - c)
            } else {
                -a * c
            }
        })
    }

    /// `log det Φ = (T−1) log(1−φ) + log(1+(T−1)φ)`.
    pub fn log_det(&self) -> S {
        let t1 = S::of_usize(self.dim - 1);
        t1 * (S::one() - self.offdiag).ln() + (S::one() + t1 * self.offdiag).ln()
    }

    /// `vᵀ Φ⁻¹ v` in O(T).
    pub fn inverse_quad_form(&self, v: &[S]) -> S {
        debug_assert_eq!(v.len(), self.dim);
        let (a, c) = self.inverse_coefficients();
        let ss: S = v.iter().map(|&x| x * x).sum();
        let s: S = v.iter().copied().sum();
        a * (ss - c * s * s)
    }

    /// `Φ⁻¹ v` in O(T).
    pub fn inverse_apply(&self, v: &[S]) -> Vec<S> {
        let (a, c) = self.inverse_coefficients();
        let s: S = v.iter().copied().sum();
        v.iter().map(|&x| a * (x - c * s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_kron(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> DenseMatrix<f64> {
        let mut out = DenseMatrix::zeros(a.rows() * b.rows(), a.cols() * b.cols());
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                for k in 0..b.rows() {
                    for l in 0..b.cols() {
                        out[(i * b.rows() + k, j * b.cols() + l)] = a[(i, j)] * b[(k, l)];
                    }
                }
            }
        }
        out
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn kron_examples() {
        let k = kron(&DenseMatrix::<f64>::identity(2), &DenseMatrix::identity(3)).unwrap();
        assert_eq!(k, DenseMatrix::identity(6));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random(3, 2, &mut rng);
        let two = DenseMatrix::from_rows(&[vec![2.0]]).unwrap();
        assert_eq!(kron(&two, &b).unwrap(), b.scale(2.0));

        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let expected = naive_kron(&a, &s);
        assert_eq!(
            expected.as_slice(),
            &[0., 1., 0., 2., 1., 0., 2., 0., 0., 3., 0., 4., 3., 0., 4., 0.]
        );
        assert_eq!(kron(&a, &s).unwrap(), expected);
    }

    #[test]
    fn kron_rejects_empty() {
        let e = DenseMatrix::<f64>::zeros(0, 2);
        assert!(matches!(kron(&e, &DenseMatrix::identity(2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn cs_inverse_examples() {
        let id = CompoundSymmetric::new(3, 0.0).unwrap().inverse();
        assert!(id.max_abs_diff(&DenseMatrix::identity(3)) < 1e-15);

        let inv = CompoundSymmetric::new(2, 0.5).unwrap().inverse();
        // Dense LU inverse of [[1, .5], [.5, 1]].
        let oracle = CompoundSymmetric::new(2, 0.5).unwrap().to_dense().inverse_lu().unwrap();
        let frozen =
            DenseMatrix::from_rows(&[vec![4.0 / 3.0, -2.0 / 3.0], vec![-2.0 / 3.0, 4.0 / 3.0]])
                .unwrap();
        assert!(inv.max_abs_diff(&frozen) < 1e-15);
        assert!(oracle.max_abs_diff(&frozen) < 1e-14);

        let cs = CompoundSymmetric::new(5, 0.7).unwrap();
        let dense = cs.to_dense().inverse_lu().unwrap();
        assert!(cs.inverse().max_abs_diff(&dense) < 1e-12);
    }

    #[test]
    fn cs_rejects_non_pd() {
        assert!(matches!(CompoundSymmetric::new(3, 1.0), Err(Error::Domain(_))));
        assert!(matches!(CompoundSymmetric::new(3, -0.5), Err(Error::Domain(_))));
        assert!(CompoundSymmetric::new(3, -0.49).is_ok());
        assert!(CompoundSymmetric::new(1, -5.0).is_ok());
        assert!(matches!(CompoundSymmetric::<f64>::new(0, 0.1), Err(Error::Dimension(_))));
    }

    #[test]
    fn cs_log_det_and_quad_form_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in 1..7 {
            let cs = CompoundSymmetric::<f64>::new(t, 0.35).unwrap();
            let dense = cs.to_dense();
            let ld = dense.cholesky().unwrap().log_det();
            assert!((cs.log_det() - ld).abs() < 1e-12);
            let v: Vec<f64> = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();
            let q = cs.inverse().quad_form(&v).unwrap();
            assert!((cs.inverse_quad_form(&v) - q).abs() < 1e-12);
            let applied = cs.inverse().matvec(&v).unwrap();
            for (a, b) in cs.inverse_apply(&v).iter().zip(&applied) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kron_trace_examples() {
        let k = 3;
        let t = 2;
        let i_k = DenseMatrix::<f64>::identity(k);
        let i_t = DenseMatrix::<f64>::identity(t);
        assert_eq!(kron_trace_product(&i_k, &i_k, &i_t, &i_t).unwrap(), (k * t) as f64);
        assert_eq!(
            kron_trace_product(&DenseMatrix::zeros(k, k), &i_k, &i_t, &i_t).unwrap(),
            0.0
        );
        assert!(kron_trace_product(&DenseMatrix::zeros(k, 2), &i_k, &i_t, &i_t).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let b = random(3, 3, &mut rng);
            let v = random(3, 3, &mut rng);
            let w = random(2, 2, &mut rng);
            let p = random(2, 2, &mut rng);
            let explicit = naive_kron(&b, &w)
                .matmul(&naive_kron(&v, &p))
                .unwrap()
                .trace()
                .unwrap();
            let fast = kron_trace_product(&b, &v, &w, &p).unwrap();
            assert!((explicit - fast).abs() < 1e-12);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let cs = CompoundSymmetric::<f32>::new(4, 0.3).unwrap();
        let prod = cs.inverse().matmul(&cs.to_dense()).unwrap();
        assert!(prod.max_abs_diff(&DenseMatrix::identity(4)) < 1e-5);
    }
}
