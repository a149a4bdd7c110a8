use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor `M = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<S> {
    l: DenseMatrix<S>,
}

impl<S: Scalar> Cholesky<S> {
    pub fn new(m: &DenseMatrix<S>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension("Cholesky needs a square matrix".into()));
        }
        let n = m.rows();
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > S::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &DenseMatrix<S> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L z = b`.
    pub fn forward(&self, b: &[S]) -> Vec<S> {
        let n = self.dim();
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn backward(&self, z: &[S]) -> Vec<S> {
        let n = self.dim();
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &[S]) -> Result<Vec<S>> {
        if b.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "rhs length {} for system of size {}",
                b.len(),
                self.dim()
            )));
        }
        Ok(self.backward(&self.forward(b)))
    }

    pub fn inverse(&self) -> DenseMatrix<S> {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![S::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = S::zero());
            e[j] = S::one();
            let col = self.backward(&self.forward(&e));
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv.symmetrize().expect("square")
    }

    pub fn log_det(&self) -> S {
        let two = S::of(2.0);
        (0..self.dim()).map(|i| two * self.l[(i, i)].ln()).sum()
    }

    /// `L z` for a vector `z`, used to draw correlated Gaussians.
    pub fn mul_lower(&self, z: &[S]) -> Vec<S> {
        self.l.matvec(z).expect("length checked by caller")
    }
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn cholesky(&self) -> Result<Cholesky<S>> {
        Cholesky::new(self)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.is_symmetric(S::of(1e-9) * (S::one() + self.max_abs())) && Cholesky::new(self).is_ok()
    }

    /// Inverse of a symmetric positive definite matrix via Cholesky.
    pub fn inverse_spd(&self) -> Result<Self> {
        Ok(Cholesky::new(self)?.inverse())
    }

    pub fn solve_spd(&self, b: &[S]) -> Result<Vec<S>> {
        Cholesky::new(self)?.solve(b)
    }

    /// General inverse by LU decomposition with partial pivoting.
    pub fn inverse_lu(&self) -> Result<Self> {
        let (lu, perm) = self.lu()?;
        let n = self.rows();
        let mut inv = Self::zeros(n, n);
        for j in 0..n {
            let mut x: Vec<S> = (0..n)
                .map(|i| if perm[i] == j { S::one() } else { S::zero() })
                .collect();
            lu_substitute(&lu, &mut x);
            for i in 0..n {
                inv[(i, j)] = x[i];
            }
        }
        Ok(inv)
    }

    pub fn solve_lu(&self, b: &[S]) -> Result<Vec<S>> {
        if b.len() != self.rows() {
            return Err(Error::Dimension("rhs length mismatch".into()));
        }
        let (lu, perm) = self.lu()?;
        let mut x: Vec<S> = perm.iter().map(|&p| b[p]).collect();
        lu_substitute(&lu, &mut x);
        Ok(x)
    }

    pub fn det(&self) -> Result<S> {
        match self.lu() {
            Ok((lu, perm)) => {
                let mut d: S = (0..self.rows()).map(|i| lu[(i, i)]).fold(S::one(), |a, b| a * b);
                if permutation_parity(&perm) {
                    d = -d;
                }
                Ok(d)
            }
            Err(Error::Singular) => Ok(S::zero()),
            Err(e) => Err(e),
        }
    }

    /// Packed LU factors (unit lower, upper) and the row permutation.
    fn lu(&self) -> Result<(Self, Vec<usize>)> {
        if !self.is_square() {
            return Err(Error::Dimension("LU needs a square matrix".into()));
        }
        let n = self.rows();
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = self.max_abs();
        for k in 0..n {
            let (piv, pval) = (k..n)
                .map(|i| (i, a[(i, k)].abs()))
                .fold((k, S::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pval <= S::tolerance() * scale || pval == S::zero() {
                return Err(Error::Singular);
            }
            if piv != k {
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(piv, j)];
                    a[(piv, j)] = tmp;
                }
                perm.swap(k, piv);
            }
            for i in (k + 1)..n {
                let f = a[(i, k)] / a[(k, k)];
                a[(i, k)] = f;
                for j in (k + 1)..n {
                    let akj = a[(k, j)];
                    a[(i, j)] -= f * akj;
                }
            }
        }
        Ok((a, perm))
    }

    pub fn symmetric_eigen(&self) -> Result<SymmetricEigen<S>> {
        SymmetricEigen::new(self)
    }
}

fn lu_substitute<S: Scalar>(lu: &DenseMatrix<S>, x: &mut [S]) {
    let n = lu.rows();
    for i in 0..n {
        for k in 0..i {
            let v = lu[(i, k)] * x[k];
            x[i] -= v;
        }
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = lu[(i, k)] * x[k];
            x[i] -= v;
        }
        x[i] /= lu[(i, i)];
    }
}

fn permutation_parity(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    let mut odd = false;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = perm[i];
            len += 1;
        }
        if len % 2 == 0 {
            odd = !odd;
        }
    }
    odd
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues are sorted in decreasing order; `vectors` holds them as columns.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<S> {
    pub values: Vec<S>,
    pub vectors: DenseMatrix<S>,
}

impl<S: Scalar> SymmetricEigen<S> {
    pub fn new(m: &DenseMatrix<S>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension("eigendecomposition needs a square matrix".into()));
        }
        let n = m.rows();
        let mut a = m.symmetrize()?;
        let mut v = DenseMatrix::identity(n);
        let scale = a.max_abs().max(S::min_positive_value());
        for _sweep in 0..100 {
            let off: S = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off.sqrt() <= S::tolerance() * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq.abs() <= S::min_positive_value() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (S::of(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                    let c = S::one() / (t * t + S::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let vectors = DenseMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
        Ok(Self { values, vectors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix<f64> {
        let g = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        g.matmul(&g.transpose())
            .unwrap()
            .add(&DenseMatrix::identity(n).scale(0.5))
            .unwrap()
    }

    #[test]
    fn cholesky_solve_residual_up_to_dim_60() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 5, 17, 33, 60] {
            let m = random_spd(n, &mut rng);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = m.solve_spd(&b).unwrap();
            let r = m.matvec(&x).unwrap();
            let res = r.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(res < 1e-10, "n={n} residual {res}");
        }
    }

    #[test]
    fn lu_and_cholesky_inverses_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_spd(7, &mut rng);
        let a = m.inverse_spd().unwrap();
        let b = m.inverse_lu().unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
        let id = m.matmul(&b).unwrap();
        assert!(id.max_abs_diff(&DenseMatrix::identity(7)) < 1e-10);
    }

    #[test]
    fn det_matches_cholesky_logdet() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_spd(5, &mut rng);
        let d = m.det().unwrap();
        let ld = m.cholesky().unwrap().log_det();
        assert!((d.ln() - ld).abs() < 1e-10);
        let swap = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(swap.det().unwrap(), -1.0);
    }

    #[test]
    fn singular_and_indefinite_are_rejected() {
        let s = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(s.inverse_lu().unwrap_err(), Error::Singular);
        assert_eq!(s.det().unwrap(), 0.0);
        let ind = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(ind.cholesky().unwrap_err(), Error::NotPositiveDefinite);
        assert!(!ind.is_positive_definite());
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_spd(6, &mut rng);
        let e = m.symmetric_eigen().unwrap();
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let lam = DenseMatrix::diag(&e.values);
        let back = e
            .vectors
            .matmul(&lam)
            .unwrap()
            .matmul(&e.vectors.transpose())
            .unwrap();
        assert!(back.max_abs_diff(&m) < 1e-10);
    }
}
