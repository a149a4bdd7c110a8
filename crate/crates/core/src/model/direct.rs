//! Direct linear regression of `y` on the stacked exposures with a factored
//! (or unstructured) coefficient matrix:
//!
//! ```text
//! y_i ~ N(μ + cᵀz_i + θᵀx_i, σ²),   θ = vec(Σ_{l≤R} ω_l β_lᵀ)
//! ```
//!
//! All linear coefficients get independent `N(0, 10)` priors.

use super::density;
use super::layout::{ParamLayout, Transform};
use super::lowfr::theta_from_factors;
use super::spec::{DirectRank, ModelSpec, Variant};
use super::Posterior;
use crate::data::ExposureDataset;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Clone, Debug)]
pub struct DirectModel {
    spec: ModelSpec,
    data: ExposureDataset,
    layout: ParamLayout,
    rank: DirectRank,
}

impl DirectModel {
    pub fn new(spec: ModelSpec, data: &ExposureDataset) -> Result<Self> {
        spec.validate()?;
        let rank = match spec.variant {
            Variant::Direct(r) => r,
            _ => return Err(Error::Usage("DirectModel needs a direct variant".into())),
        };
        if data.has_missing() {
            return Err(Error::Configuration(
                "direct regression needs complete exposures".into(),
            ));
        }
        if data.n() != spec.n || data.p() != spec.p || data.times() != spec.times {
            return Err(Error::Configuration("model spec does not match dataset".into()));
        }
        let layout = direct_layout(&spec);
        Ok(Self {
            spec,
            data: data.clone(),
            layout,
            rank,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Coefficient vector `θ` (length `pT`, exposure-major) of a constrained draw.
    pub fn theta(&self, constrained: &[f64]) -> Result<Vec<f64>> {
        theta_of(&self.spec, &self.layout, constrained)
    }

    fn eval(&self, u: &[f64], g: &mut [f64]) -> Result<f64> {
        if u.len() != self.layout.dim() || g.len() != u.len() {
            return Err(Error::Layout {
                expected: self.layout.dim(),
                got: u.len(),
            });
        }
        g.iter_mut().for_each(|v| *v = 0.0);
        let (p, tt) = (self.spec.p, self.spec.times);
        let w = p * tt;
        let var = self.spec.hyper.intercept_cov_var;
        let coef_var = self.spec.hyper.loading_var;
        let mut lp = 0.0;
        let lin = self.layout.range("sigma2").map_or(0, |r| r.start);
        let no_prior_end = 1 + self.spec.n_covariates;
        for i in 0..lin {
            let v = if i < no_prior_end { var } else { coef_var };
            let (val, d) = density::normal(u[i], v);
            lp += val;
            g[i] += d;
        }
        let ls = lin;
        let (val, d) = density::inv_gamma_log(u[ls], self.spec.hyper.ig_shape, self.spec.hyper.ig_rate);
        lp += val;
        g[ls] += d;
        if !lp.is_finite() {
            return Err(Error::Evaluation {
                block: "prior".into(),
            });
        }

        let theta = theta_of_unconstrained(&self.spec, &self.layout, u);
        let cov0 = 1;
        let s2_inv = (-u[ls]).exp();
        let mut g_theta = vec![0.0; w];
        let mut like = 0.0;
        for i in 0..self.data.n() {
            let x = self.data.x_row(i);
            let z = self.data.z_row(i);
            let mut mean = u[0];
            for (c, &zv) in z.iter().enumerate() {
                mean += u[cov0 + c] * zv;
            }
            for (a, b) in theta.iter().zip(x) {
                mean += a * b;
            }
            let r = self.data.y()[i] - mean;
            let wgt = r * s2_inv;
            like -= 0.5 * r * r * s2_inv;
            g[ls] += 0.5 * r * r * s2_inv;
            g[0] += wgt;
            for (c, &zv) in z.iter().enumerate() {
                g[cov0 + c] += wgt * zv;
            }
            for (gt, &xv) in g_theta.iter_mut().zip(x) {
                *gt += wgt * xv;
            }
        }
        let n = self.data.n() as f64;
        like -= 0.5 * n * (u[ls] + density::LN_2PI);
        g[ls] -= 0.5 * n;
        if !like.is_finite() {
            return Err(Error::Evaluation { block: "y".into() });
        }
        lp += like;

        match self.rank {
            DirectRank::Full => {
                let t0 = self.layout.range("theta").expect("theta block").start;
                for (e, gt) in g_theta.iter().enumerate() {
                    g[t0 + e] += gt;
                }
            }
            DirectRank::Rank(r) => {
                let b0 = self.layout.range("beta").expect("beta block").start;
                let o0 = self.layout.range("omega").expect("omega block").start;
                for l in 0..r {
                    for j in 0..p {
                        for t in 0..tt {
                            let gt = g_theta[j * tt + t];
                            g[b0 + l * p + j] += gt * u[o0 + l * tt + t];
                            g[o0 + l * tt + t] += gt * u[b0 + l * p + j];
                        }
                    }
                }
            }
        }
        if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
            let block = self
                .layout
                .block_of(bad)
                .map(|b| b.unconstrained_name())
                .unwrap_or_default();
            return Err(Error::Evaluation { block });
        }
        Ok(lp)
    }
}

impl Posterior for DirectModel {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.eval(u, grad)
    }
}

pub(crate) fn direct_layout(spec: &ModelSpec) -> ParamLayout {
    let mut l = ParamLayout::new();
    l.push("mu", &[], Transform::Identity);
    l.push("cov", &[spec.n_covariates], Transform::Identity);
    match spec.variant {
        Variant::Direct(DirectRank::Rank(r)) => {
            l.push("beta", &[r, spec.p], Transform::Identity);
            l.push("omega", &[r, spec.times], Transform::Identity);
        }
        _ => {
            l.push("theta", &[spec.p, spec.times], Transform::Identity);
        }
    }
    l.push("sigma2", &[], Transform::Log);
    l
}

/// `θ` from a parameter vector, identity blocks only, so the same code serves
/// both scales.
fn theta_of_unconstrained(spec: &ModelSpec, layout: &ParamLayout, v: &[f64]) -> Vec<f64> {
    if let Some(r) = layout.range("theta") {
        return v[r].to_vec();
    }
    let b = layout.range("beta").expect("beta block");
    let o = layout.range("omega").expect("omega block");
    let rank = b.len() / spec.p;
    let beta = DenseMatrix::from_fn(rank, spec.p, |l, j| v[b.start + l * spec.p + j]);
    let omega = DenseMatrix::from_fn(rank, spec.times, |l, t| v[o.start + l * spec.times + t]);
    theta_from_factors(&beta, &omega)
}

fn theta_of(spec: &ModelSpec, layout: &ParamLayout, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != layout.dim() {
        return Err(Error::Layout {
            expected: layout.dim(),
            got: v.len(),
        });
    }
    Ok(theta_of_unconstrained(spec, layout, v))
}
