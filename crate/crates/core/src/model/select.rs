use crate::data::ExposureDataset;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Singular values, descending, of the `(nT) × p` matrix stacking every
/// time slice of the exposures row-wise. Masked entries are mean-imputed.
pub fn singular_values(data: &ExposureDataset) -> Result<Vec<f64>> {
    if data.n() == 0 || data.p() == 0 || data.times() == 0 {
        return Err(Error::Input("empty exposure tensor".into()));
    }
    let filled = data.mean_imputed();
    let (p, tt) = (data.p(), data.times());
    let mut gram = DenseMatrix::<f64>::zeros(p, p);
    for i in 0..data.n() {
        let row = filled.x_row(i);
        for t in 0..tt {
            for a in 0..p {
                let xa = row[a * tt + t];
                for b in a..p {
                    gram[(a, b)] += xa * row[b * tt + t];
                }
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let eig = gram.symmetric_eigen()?;
    Ok(eig.values.iter().map(|&v| v.max(0.0).sqrt()).collect())
}

/// Smallest `k` whose leading singular values carry strictly more than 90%
/// of the total. A ratio equal to 0.9 up to rounding does not count.
pub fn select_k(data: &ExposureDataset) -> Result<usize> {
    let sv = singular_values(data)?;
    let total: f64 = sv.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Input("exposure matrix is identically zero".into()));
    }
    let threshold = 0.9 * total * (1.0 + 1e-12);
    let mut cum = 0.0;
    for (j, v) in sv.iter().enumerate() {
        cum += v;
        if cum > threshold {
            return Ok(j + 1);
        }
    }
    Ok(sv.len())
}

/// Best rank-`rank` factorization of a `p × T` coefficient matrix
/// (`θ[j·T + t]`) as `Σ_l ω_l β_lᵀ`. Returns `(β: rank × p, ω: rank × T)`.
/// With `rank = min(p, T)` the factorization is exact.
pub fn factorize_rank(theta: &[f64], p: usize, times: usize, rank: usize) -> Result<(DenseMatrix<f64>, DenseMatrix<f64>)> {
    if theta.len() != p * times {
        return Err(Error::Dimension(format!(
            "theta has {} entries, expected {}",
            theta.len(),
            p * times
        )));
    }
    if rank == 0 || rank > p.min(times) {
        return Err(Error::Domain(format!("rank {rank} out of range")));
    }
    let m = DenseMatrix::new(p, times, theta.to_vec())?;
    let mut beta = DenseMatrix::zeros(rank, p);
    let mut omega = DenseMatrix::zeros(rank, times);
    if times <= p {
        // θ = Σ (θ v_l) v_lᵀ with v_l eigenvectors of θᵀθ.
        let eig = m.transpose().matmul(&m)?.symmetric_eigen()?;
        for l in 0..rank {
            let v: Vec<f64> = (0..times).map(|t| eig.vectors[(t, l)]).collect();
            let mv = m.matvec(&v)?;
            for j in 0..p {
                beta[(l, j)] = mv[j];
            }
            for t in 0..times {
                omega[(l, t)] = v[t];
            }
        }
    } else {
        let eig = m.matmul(&m.transpose())?.symmetric_eigen()?;
        for l in 0..rank {
            let u: Vec<f64> = (0..p).map(|j| eig.vectors[(j, l)]).collect();
            let um = m.vecmat(&u)?;
            for j in 0..p {
                beta[(l, j)] = u[j];
            }
            for t in 0..times {
                omega[(l, t)] = um[t];
            }
        }
    }
    Ok((beta, omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lowfr::theta_from_factors;

    #[test]
    fn equal_singular_values_need_strict_majority() {
        // Stacked matrix = I_4 repeated: all singular values equal, k/4 > 0.9 → k = 4.
        let (p, tt) = (4, 2);
        let mut x = Vec::new();
        for i in 0..p {
            for j in 0..p {
                for _ in 0..tt {
                    x.push(if i == j { 1.0 } else { 0.0 });
                }
            }
        }
        let data = ExposureDataset::complete(vec![0.0; p], p, tt, x).unwrap();
        assert_eq!(select_k(&data).unwrap(), 4);
    }

    #[test]
    fn ten_equal_values_stop_at_ten() {
        // 9/10 = 0.9 exactly is not enough.
        let p = 10;
        let mut x = vec![0.0; p * p];
        for i in 0..p {
            x[i * p + i] = 1.0;
        }
        let data = ExposureDataset::complete(vec![0.0; p], p, 1, x).unwrap();
        assert_eq!(select_k(&data).unwrap(), 10);
    }

    #[test]
    fn rank_one_matrix_needs_one_factor() {
        let (n, p, tt) = (6, 5, 3);
        let mut x = Vec::new();
        for i in 0..n {
            for j in 0..p {
                for t in 0..tt {
                    x.push((i + 1) as f64 * (t + 1) as f64 * (j as f64 - 1.5));
                }
            }
        }
        let data = ExposureDataset::complete(vec![0.0; n], p, tt, x).unwrap();
        assert_eq!(select_k(&data).unwrap(), 1);
    }

    #[test]
    fn full_rank_factorization_is_exact() {
        for (p, tt) in [(5, 3), (2, 4), (3, 3)] {
            let theta: Vec<f64> = (0..p * tt).map(|e| ((e * 37 % 11) as f64 - 5.0) / 3.0).collect();
            let (b, w) = factorize_rank(&theta, p, tt, p.min(tt)).unwrap();
            let back = theta_from_factors(&b, &w);
            for (a, c) in theta.iter().zip(&back) {
                assert!((a - c).abs() < 1e-10);
            }
        }
    }
}
