//! Correlated quadratic regression: `y` on every measurement and every
//! pairwise product, with compound-symmetric priors tying together the
//! coefficients of one exposure (main effects) or one exposure pair
//! (interactions).

use crate::data::ExposureDataset;
use crate::error::{Error, Result};
use crate::linalg::{CompoundSymmetric, DenseMatrix};
use crate::model::{density, logistic, ParamLayout, Posterior, Transform};
use crate::scalar::Scalar;

/// One design column. Indices are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CqrTerm {
    Main { j: usize, t: usize },
    /// Product `x_{j1,t1} · x_{j2,t2}` with `j2 ≤ j1`, and `t2 ≤ t1` when `j1 = j2`.
    Int { j1: usize, j2: usize, t1: usize, t2: usize },
}

impl CqrTerm {
    /// Canonical interaction term for the unordered pair of measurements.
    pub fn interaction(ja: usize, ta: usize, jb: usize, tb: usize) -> Self {
        let ((j1, t1), (j2, t2)) = if (ja, ta) >= (jb, tb) { ((ja, ta), (jb, tb)) } else { ((jb, tb), (ja, ta)) };
        CqrTerm::Int { j1, j2, t1, t2 }
    }

    pub fn label(&self) -> String {
        match *self {
            CqrTerm::Main { j, t } => format!("main_{}_{}", j + 1, t + 1),
            CqrTerm::Int { j1, j2, t1, t2 } => format!("int_{}_{}_{}_{}", j1 + 1, j2 + 1, t1 + 1, t2 + 1),
        }
    }
}

/// Number of design columns for `p` exposures and `T` times.
pub fn term_count(p: usize, times: usize) -> usize {
    let w = p * times;
    w + w * (w + 1) / 2
}

/// Canonical term list: all `Main` in `(j, t)` order, then `Int` ordered by
/// `(j1, j2, t1, t2)`.
pub fn terms(p: usize, times: usize) -> Vec<CqrTerm> {
    let mut out = Vec::with_capacity(term_count(p, times));
    for j in 0..p {
        for t in 0..times {
            out.push(CqrTerm::Main { j, t });
        }
    }
    for j1 in 0..p {
        for j2 in 0..=j1 {
            for t1 in 0..times {
                for t2 in 0..times {
                    if j1 == j2 && t2 > t1 {
                        continue;
                    }
                    out.push(CqrTerm::Int { j1, j2, t1, t2 });
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct CqrDesign<S> {
    pub p: usize,
    pub times: usize,
    pub terms: Vec<CqrTerm>,
    /// `n × m`.
    pub matrix: DenseMatrix<S>,
}

/// Expands exposures (`n × pT`, exposure-major) into the quadratic design.
pub fn build_design<S: Scalar>(x: &[S], n: usize, p: usize, times: usize) -> Result<CqrDesign<S>> {
    let w = p * times;
    if x.len() != n * w {
        return Err(Error::Input(format!("expected {} exposure values, got {}", n * w, x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("quadratic design needs complete, finite exposures".into()));
    }
    let terms = terms(p, times);
    let m = terms.len();
    let mut data = Vec::with_capacity(n * m);
    for i in 0..n {
        let row = &x[i * w..(i + 1) * w];
        for term in &terms {
            data.push(match *term {
                CqrTerm::Main { j, t } => row[j * times + t],
                CqrTerm::Int { j1, j2, t1, t2 } => row[j1 * times + t1] * row[j2 * times + t2],
            });
        }
    }
    Ok(CqrDesign {
        p,
        times,
        terms,
        matrix: DenseMatrix::new(n, m, data)?,
    })
}

impl CqrDesign<f64> {
    pub fn from_dataset(data: &ExposureDataset) -> Result<Self> {
        if data.has_missing() {
            return Err(Error::Input("quadratic design needs complete exposures; impute first".into()));
        }
        build_design(data.x(), data.n(), data.p(), data.times())
    }

    pub fn n_main(&self) -> usize {
        self.p * self.times
    }

    /// Ranges of main-effect columns sharing an exposure.
    pub fn main_blocks(&self) -> Vec<std::ops::Range<usize>> {
        (0..self.p).map(|j| j * self.times..(j + 1) * self.times).collect()
    }

    /// Ranges of interaction columns sharing an exposure pair, relative to
    /// the first interaction column.
    pub fn int_blocks(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut current: Option<(usize, usize)> = None;
        for (e, term) in self.terms[self.n_main()..].iter().enumerate() {
            if let CqrTerm::Int { j1, j2, .. } = *term {
                if current != Some((j1, j2)) {
                    if current.is_some() {
                        out.push(start..e);
                    }
                    start = e;
                    current = Some((j1, j2));
                }
            }
        }
        if current.is_some() {
            out.push(start..self.terms.len() - self.n_main());
        }
        out
    }
}

/// Block-diagonal prior covariance of the coefficients: one `ν·CS(ψ)` block
/// per exposure (main effects) and per exposure pair (interactions).
#[derive(Clone, Debug)]
pub struct CqrPriorCovariance {
    pub nu_main: f64,
    pub nu_int: f64,
    pub main: Vec<CompoundSymmetric<f64>>,
    pub int: Vec<CompoundSymmetric<f64>>,
}

pub fn cqr_prior_covariance(
    p: usize,
    times: usize,
    nu_main: f64,
    nu_int: f64,
    psi_main: f64,
    psi_int: f64,
) -> Result<CqrPriorCovariance> {
    if !(nu_main > 0.0 && nu_int > 0.0) {
        return Err(Error::Domain("prior variances must be positive".into()));
    }
    for psi in [psi_main, psi_int] {
        if !(0.0..1.0).contains(&psi) {
            return Err(Error::Domain(format!("correlation {psi} outside [0, 1)")));
        }
    }
    let main = (0..p).map(|_| CompoundSymmetric::new(times, psi_main)).collect::<Result<Vec<_>>>()?;
    let mut int = Vec::new();
    for j1 in 0..p {
        for j2 in 0..=j1 {
            let size = if j1 == j2 { times * (times + 1) / 2 } else { times * times };
            int.push(CompoundSymmetric::new(size, psi_int)?);
        }
    }
    Ok(CqrPriorCovariance {
        nu_main,
        nu_int,
        main,
        int,
    })
}

impl CqrPriorCovariance {
    /// Main-effect covariance `pT × pT`.
    pub fn main_dense(&self) -> DenseMatrix<f64> {
        block_diag(&self.main, self.nu_main)
    }

    pub fn int_dense(&self) -> DenseMatrix<f64> {
        block_diag(&self.int, self.nu_int)
    }

    /// Covariance of all coefficients in design-column order.
    pub fn to_dense(&self) -> DenseMatrix<f64> {
        let a = self.main_dense();
        let b = self.int_dense();
        let m = a.rows() + b.rows();
        DenseMatrix::from_fn(m, m, |r, c| {
            if r < a.rows() && c < a.rows() {
                a[(r, c)]
            } else if r >= a.rows() && c >= a.rows() {
                b[(r - a.rows(), c - a.rows())]
            } else {
                0.0
            }
        })
    }
}

fn block_diag(blocks: &[CompoundSymmetric<f64>], scale: f64) -> DenseMatrix<f64> {
    let m: usize = blocks.iter().map(|b| b.dim()).sum();
    let mut out = DenseMatrix::zeros(m, m);
    let mut off = 0;
    for b in blocks {
        let d = b.to_dense();
        for r in 0..b.dim() {
            for c in 0..b.dim() {
                out[(off + r, off + c)] = scale * d[(r, c)];
            }
        }
        off += b.dim();
    }
    out
}

/// Posterior mean of `(μ, coefficients)` given fixed hyperparameters: the
/// Gaussian conjugate update with a `N(0, 10)` intercept.
pub fn conditional_coefficient_mean(
    design: &CqrDesign<f64>,
    y: &[f64],
    sigma2: f64,
    prior: &CqrPriorCovariance,
) -> Result<Vec<f64>> {
    let x = &design.matrix;
    let m = x.cols();
    let n = x.rows();
    if y.len() != n {
        return Err(Error::Dimension("outcome length does not match design".into()));
    }
    let prior_prec = prior.to_dense().inverse_spd()?;
    let dim = m + 1;
    let mut prec = DenseMatrix::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        let row: Vec<f64> = std::iter::once(1.0).chain(x.row(i).iter().copied()).collect();
        for a in 0..dim {
            rhs[a] += row[a] * y[i] / sigma2;
            for b in 0..dim {
                prec[(a, b)] += row[a] * row[b] / sigma2;
            }
        }
    }
    prec[(0, 0)] += 0.1;
    for a in 0..m {
        for b in 0..m {
            prec[(a + 1, b + 1)] += prior_prec[(a, b)];
        }
    }
    prec.symmetrize()?.solve_spd(&rhs)
}

/// Posterior of the quadratic regression on the unconstrained scale.
#[derive(Clone, Debug)]
pub struct CqrModel {
    design: CqrDesign<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    n_cov: usize,
    layout: ParamLayout,
    main_blocks: Vec<std::ops::Range<usize>>,
    int_blocks: Vec<std::ops::Range<usize>>,
}

impl CqrModel {
    pub fn new(data: &ExposureDataset) -> Result<Self> {
        let design = CqrDesign::from_dataset(data)?;
        Self::from_design(design, data.y().to_vec(), data.z().to_vec(), data.n_covariates())
    }

    pub fn from_design(design: CqrDesign<f64>, y: Vec<f64>, z: Vec<f64>, n_cov: usize) -> Result<Self> {
        if y.len() != design.matrix.rows() || z.len() != y.len() * n_cov {
            return Err(Error::Dimension("design, outcome and covariates disagree".into()));
        }
        let n_main = design.n_main();
        let n_int = design.terms.len() - n_main;
        let mut layout = ParamLayout::new();
        layout.push("mu", &[], Transform::Identity);
        layout.push("cov", &[n_cov], Transform::Identity);
        layout.push("theta", &[n_main], Transform::Identity);
        layout.push("gamma", &[n_int], Transform::Identity);
        layout.push("sigma2", &[], Transform::Log);
        layout.push("nu_main", &[], Transform::Log);
        layout.push("nu_int", &[], Transform::Log);
        layout.push("psi_main", &[], Transform::Logit);
        layout.push("psi_int", &[], Transform::Logit);
        let main_blocks = design.main_blocks();
        let int_blocks = design.int_blocks();
        Ok(Self {
            design,
            y,
            z,
            n_cov,
            layout,
            main_blocks,
            int_blocks,
        })
    }

    pub fn design(&self) -> &CqrDesign<f64> {
        &self.design
    }

    /// Coefficients `(θ, γ)` in design order from a constrained draw.
    pub fn coefficients<'a>(&self, constrained: &'a [f64]) -> &'a [f64] {
        let start = self.layout.range("theta").expect("theta").start;
        &constrained[start..start + self.design.terms.len()]
    }

    /// `E[y | x]` for one design row under a constrained draw, covariates at `z`.
    pub fn predict_row(&self, constrained: &[f64], design_row: &[f64], z: &[f64]) -> f64 {
        let cov = &constrained[self.layout.range("cov").expect("cov")];
        constrained[0]
            + cov.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
            + self.coefficients(constrained).iter().zip(design_row).map(|(a, b)| a * b).sum::<f64>()
    }

    fn eval(&self, u: &[f64], g: &mut [f64]) -> Result<f64> {
        if u.len() != self.layout.dim() || g.len() != u.len() {
            return Err(Error::Layout {
                expected: self.layout.dim(),
                got: u.len(),
            });
        }
        g.iter_mut().for_each(|v| *v = 0.0);
        let coef0 = 1 + self.n_cov;
        let m = self.design.terms.len();
        let n_main = self.design.n_main();
        let ls = coef0 + m;
        let (lnu_m, lnu_i, lpsi_m, lpsi_i) = (ls + 1, ls + 2, ls + 3, ls + 4);
        let mut lp = 0.0;

        for i in 0..coef0 {
            let (v, d) = density::normal(u[i], 10.0);
            lp += v;
            g[i] += d;
        }
        for i in [ls, lnu_m, lnu_i] {
            let (v, d) = density::inv_gamma_log(u[i], 1.0, 1.0);
            lp += v;
            g[i] += d;
        }
        for i in [lpsi_m, lpsi_i] {
            let (v, d) = density::uniform_logit(u[i]);
            lp += v;
            g[i] += d;
        }
        if !lp.is_finite() {
            return Err(Error::Evaluation {
                block: "hyperparameters".into(),
            });
        }

        let mut prior = 0.0;
        for (blocks, base, lnu, lpsi) in [
            (&self.main_blocks, coef0, lnu_m, lpsi_m),
            (&self.int_blocks, coef0 + n_main, lnu_i, lpsi_i),
        ] {
            let nu_inv = (-u[lnu]).exp();
            let psi = logistic(u[lpsi]);
            let one_minus = logistic(-u[lpsi]);
            let mut g_psi = 0.0;
            for r in blocks.iter() {
                let d = r.len();
                let d1 = (d - 1) as f64;
                let a = 1.0 / one_minus;
                let denom = 1.0 + d1 * psi;
                let c = psi / denom;
                let v = &u[base + r.start..base + r.end];
                let (s, ss) = v.iter().fold((0.0, 0.0), |(s, ss), &x| (s + x, ss + x * x));
                let q0 = ss - c * s * s;
                let log_det = d1 * one_minus.ln() + denom.ln();
                prior -= 0.5 * (d as f64 * (density::LN_2PI + u[lnu]) + log_det + nu_inv * a * q0);
                for (e, &x) in v.iter().enumerate() {
                    g[base + r.start + e] -= nu_inv * a * (x - c * s);
                }
                g[lnu] += -0.5 * d as f64 + 0.5 * nu_inv * a * q0;
                let dq = a * a * q0 - a * s * s / (denom * denom);
                let dld = -d1 / one_minus + d1 / denom;
                g_psi -= 0.5 * (dld + nu_inv * dq);
            }
            g[lpsi] += g_psi * psi * one_minus;
        }
        if !prior.is_finite() {
            return Err(Error::Evaluation {
                block: "coefficients".into(),
            });
        }
        lp += prior;

        let s2_inv = (-u[ls]).exp();
        let coef = &u[coef0..coef0 + m];
        let mut like = 0.0;
        let mut g_coef = vec![0.0; m];
        for i in 0..self.y.len() {
            let row = self.design.matrix.row(i);
            let z = &self.z[i * self.n_cov..(i + 1) * self.n_cov];
            let mut mean = u[0];
            for (c, &zv) in z.iter().enumerate() {
                mean += u[1 + c] * zv;
            }
            mean += coef.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            let r = self.y[i] - mean;
            let w = r * s2_inv;
            like -= 0.5 * r * r * s2_inv;
            g[ls] += 0.5 * r * r * s2_inv;
            g[0] += w;
            for (c, &zv) in z.iter().enumerate() {
                g[1 + c] += w * zv;
            }
            for (gc, &x) in g_coef.iter_mut().zip(row) {
                *gc += w * x;
            }
        }
        let n = self.y.len() as f64;
        like -= 0.5 * n * (u[ls] + density::LN_2PI);
        g[ls] -= 0.5 * n;
        if !like.is_finite() {
            return Err(Error::Evaluation { block: "y".into() });
        }
        for (e, gc) in g_coef.iter().enumerate() {
            g[coef0 + e] += gc;
        }
        if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
            let block = self.layout.block_of(bad).map(|b| b.unconstrained_name()).unwrap_or_default();
            return Err(Error::Evaluation { block });
        }
        Ok(lp + like)
    }
}

impl Posterior for CqrModel {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.eval(u, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_counts() {
        assert_eq!(terms(1, 2).len(), 5);
        assert_eq!(terms(2, 1).len(), 5);
        for (p, t) in [(3, 2), (10, 3), (4, 4)] {
            let expected = p * t + p * t * (t + 1) / 2 + p * (p - 1) / 2 * t * t;
            assert_eq!(terms(p, t).len(), expected);
            assert_eq!(term_count(p, t), expected);
        }
    }

    #[test]
    fn zero_exposures_give_zero_design() {
        let d = build_design(&[0.0f64; 12], 2, 2, 3).unwrap();
        assert!(d.matrix.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prior_blocks() {
        let c = cqr_prior_covariance(1, 2, 2.0, 1.0, 0.5, 0.0).unwrap();
        let m = c.main_dense();
        assert_eq!(m.as_slice(), &[2.0, 1.0, 1.0, 2.0]);
        let c = cqr_prior_covariance(2, 2, 1.0, 1.0, 0.0, 0.3).unwrap();
        // Blocks: (1,1) 3 terms, (2,1) 4 terms, (2,2) 3 terms.
        assert_eq!(c.int.iter().map(|b| b.dim()).collect::<Vec<_>>(), vec![3, 4, 3]);
        assert_eq!(c.main_dense(), DenseMatrix::identity(4));
        assert!(cqr_prior_covariance(2, 2, 1.0, 1.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn int_block_ranges_follow_pairs() {
        let d = build_design(&[1.0f64; 6], 1, 2, 3).unwrap();
        let blocks = d.int_blocks();
        assert_eq!(blocks, vec![0..6, 6..15, 15..21]);
    }

    #[test]
    fn f32_design() {
        let d = build_design(&[1.5f32, 2.0], 1, 1, 2).unwrap();
        assert_eq!(d.matrix.as_slice(), &[1.5, 2.0, 2.25, 3.0, 4.0]);
    }
}
