//! Forward draws from the full prior, returned on the unconstrained scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::layout::ParamLayout;
use super::spec::{ModelSpec, Variant};
use super::layout_for;
use crate::error::{Error, Result};

/// One prior draw. Deterministic given `seed`.
pub fn prior_sample(spec: &ModelSpec, seed: u64) -> Result<Vec<f64>> {
    draw(spec, seed, None)
}

/// As [`prior_sample`] but with the MGP shapes `a1`, `a2` held fixed.
pub fn prior_sample_with_fixed_shapes(spec: &ModelSpec, seed: u64, a1: f64, a2: f64) -> Result<Vec<f64>> {
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(Error::Domain("gamma shapes must be positive".into()));
    }
    draw(spec, seed, Some((a1, a2)))
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn normal(&mut self, var: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        z * var.sqrt()
    }

    /// Log of a `Gamma(shape, rate)` draw, floored away from `−∞`.
    fn log_gamma(&mut self, shape: f64, rate: f64) -> f64 {
        let g = Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters");
        g.sample(&mut self.rng).max(f64::MIN_POSITIVE).ln()
    }

    /// Log of an `InvGamma(shape, rate)` draw.
    fn log_inv_gamma(&mut self, shape: f64, rate: f64) -> f64 {
        -self.log_gamma(shape, rate)
    }
}

fn draw(spec: &ModelSpec, seed: u64, fixed: Option<(f64, f64)>) -> Result<Vec<f64>> {
    spec.validate()?;
    let layout = layout_for(spec);
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let hy = spec.hyper;
    let mut u = vec![0.0; layout.dim()];
    let set = |u: &mut Vec<f64>, layout: &ParamLayout, name: &str, vals: &[f64]| {
        let r = layout.range(name).expect("block present");
        u[r].copy_from_slice(vals);
    };

    let mu = s.normal(hy.intercept_cov_var);
    set(&mut u, &layout, "mu", &[mu]);
    let cov: Vec<f64> = (0..spec.n_covariates).map(|_| s.normal(hy.intercept_cov_var)).collect();
    set(&mut u, &layout, "cov", &cov);

    if let Variant::Direct(_) = spec.variant {
        for name in ["beta", "omega", "theta"] {
            if let Some(r) = layout.range(name) {
                for i in r {
                    u[i] = s.normal(hy.loading_var);
                }
            }
        }
        let v = s.log_inv_gamma(hy.ig_shape, hy.ig_rate);
        set(&mut u, &layout, "sigma2", &[v]);
        return Ok(u);
    }

    let (p, tt, k, h1) = (spec.p, spec.times, spec.k, spec.h1);

    // Main-effect MGP.
    let (la1, la2) = match fixed {
        Some((a1, a2)) => (a1.ln(), a2.ln()),
        None => (
            s.log_gamma(hy.a_shape, hy.a_rate),
            s.log_gamma(hy.a_shape, hy.a_rate),
        ),
    };
    let ldelta: Vec<f64> = (0..h1)
        .map(|l| s.log_gamma(if l == 0 { la1 } else { la2 }.exp(), 1.0))
        .collect();
    let log_tau: Vec<f64> = ldelta
        .iter()
        .scan(0.0, |acc, &d| {
            *acc += d;
            Some(*acc)
        })
        .collect();
    let lxi_beta: Vec<f64> = (0..h1 * k).map(|_| s.log_gamma(hy.xi_shape, hy.xi_rate)).collect();
    let lxi_omega: Vec<f64> = (0..h1 * tt).map(|_| s.log_gamma(hy.xi_shape, hy.xi_rate)).collect();
    let beta: Vec<f64> = (0..h1 * k)
        .map(|e| s.normal((-(lxi_beta[e] + log_tau[e / k])).exp()))
        .collect();
    let omega: Vec<f64> = (0..h1 * tt)
        .map(|e| s.normal((-(lxi_omega[e] + log_tau[e / tt])).exp()))
        .collect();
    set(&mut u, &layout, "beta", &beta);
    set(&mut u, &layout, "omega", &omega);
    set(&mut u, &layout, "xi_beta", &lxi_beta);
    set(&mut u, &layout, "xi_omega", &lxi_omega);
    set(&mut u, &layout, "delta", &ldelta);
    set(&mut u, &layout, "a1", &[la1]);
    set(&mut u, &layout, "a2", &[la2]);

    // Interaction MGP.
    let la_int = s.log_gamma(hy.a_shape, hy.a_rate);
    let ltau_int = s.log_gamma(la_int.exp(), 1.0);
    let lxi_b: Vec<f64> = (0..k * k).map(|_| s.log_gamma(hy.xi_shape, hy.xi_rate)).collect();
    let lxi_w: Vec<f64> = (0..tt * tt).map(|_| s.log_gamma(hy.xi_shape, hy.xi_rate)).collect();
    let b: Vec<f64> = lxi_b.iter().map(|&x| s.normal((-(x + ltau_int)).exp())).collect();
    let w: Vec<f64> = lxi_w.iter().map(|&x| s.normal((-(x + ltau_int)).exp())).collect();
    set(&mut u, &layout, "B", &b);
    set(&mut u, &layout, "W", &w);
    set(&mut u, &layout, "xi_B", &lxi_b);
    set(&mut u, &layout, "xi_W", &lxi_w);
    set(&mut u, &layout, "delta_int", &[ltau_int]);
    set(&mut u, &layout, "a_int", &[la_int]);

    // Factor model.
    let lambda: Vec<f64> = (0..p * k).map(|_| s.normal(hy.loading_var)).collect();
    let lsigma2: Vec<f64> = (0..p).map(|_| s.log_inv_gamma(hy.ig_shape, hy.ig_rate)).collect();
    let lsigma2_y = s.log_inv_gamma(hy.ig_shape, hy.ig_rate);
    let phi: f64 = s.rng.random_range(f64::EPSILON..1.0);
    set(&mut u, &layout, "Lambda", &lambda);
    set(&mut u, &layout, "sigma2", &lsigma2);
    set(&mut u, &layout, "sigma2_y", &[lsigma2_y]);
    set(&mut u, &layout, "phi", &[phi.ln() - (-phi).ln_1p()]);

    // η_i ~ N(0, I_k ⊗ Φ) via the CS square root: sqrt(1−φ)·z + sqrt(φ)·z0·1.
    let kt = k * tt;
    let eta_r = layout.range("eta").expect("eta block");
    let mut eta = vec![0.0; spec.n * kt];
    for i in 0..spec.n {
        for h in 0..k {
            let common = s.normal(phi);
            for t in 0..tt {
                eta[i * kt + h * tt + t] = common + s.normal(1.0 - phi);
            }
        }
    }
    u[eta_r].copy_from_slice(&eta);

    // Imputation slots hold standardized exposures; the prior knows nothing
    // about which entries they are.
    if let Some(r) = layout.range("x_missing") {
        for i in r {
            u[i] = s.normal(1.0);
        }
    }

    if let Variant::LowFrSexInt { .. } = spec.variant {
        let la = s.log_gamma(hy.a_shape, hy.a_rate);
        let ltau = s.log_gamma(la.exp(), 1.0);
        let lxb: Vec<f64> = (0..k).map(|_| s.log_gamma(hy.xi_shape, hy.xi_rate)).collect();
        let lxo: Vec<f64> = (0..tt).map(|_| s.log_gamma(hy.xi_shape, hy.xi_rate)).collect();
        let bs: Vec<f64> = lxb.iter().map(|&x| s.normal((-(x + ltau)).exp())).collect();
        let os: Vec<f64> = lxo.iter().map(|&x| s.normal((-(x + ltau)).exp())).collect();
        set(&mut u, &layout, "beta_sex", &bs);
        set(&mut u, &layout, "omega_sex", &os);
        set(&mut u, &layout, "xi_beta_sex", &lxb);
        set(&mut u, &layout, "xi_omega_sex", &lxo);
        set(&mut u, &layout, "tau_sex", &[ltau]);
        set(&mut u, &layout, "a_sex", &[la]);
    }
    Ok(u)
}
