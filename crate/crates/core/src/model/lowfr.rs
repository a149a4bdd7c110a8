//! Joint longitudinal factor regression.
//!
//! ```text
//! x_i = (Λ ⊗ I_T) η_i + ε_i,   η_i ~ N(0, I_k ⊗ Φ),   ε_i ~ N(0, Σ ⊗ Φ)
//! y_i ~ N(μ + cᵀz_i + θᵀη_i + η_iᵀ(B ⊗ W)η_i, σ²_y),   θ = vec(Σ_l ω_l β_lᵀ)
//! ```
//!
//! with multiplicative gamma process shrinkage on `(β_l, ω_l)` and a
//! one-level version of it on `(B, W)`. Latent factors are stored
//! factor-major, time-minor: `η_i[h·T + t]`.

use std::ops::Range;

use super::density::{self, LN_2PI};
use super::layout::{logistic, ParamLayout, Transform};
use super::spec::{ModelSpec, Variant};
use super::Posterior;
use crate::data::ExposureDataset;
use crate::error::{Error, Result};
use crate::linalg::{CompoundSymmetric, DenseMatrix};

#[derive(Clone, Debug)]
struct Offsets {
    mu: usize,
    cov: usize,
    beta: usize,
    omega: usize,
    lxi_beta: usize,
    lxi_omega: usize,
    ldelta: usize,
    la1: usize,
    la2: usize,
    b: usize,
    w: usize,
    lxi_b: usize,
    lxi_w: usize,
    ldelta_int: usize,
    la_int: usize,
    lambda: usize,
    lsigma2: usize,
    lsigma2_y: usize,
    lphi: usize,
    eta: usize,
    x_missing: usize,
    sex: Option<SexOffsets>,
}

#[derive(Clone, Debug)]
struct SexOffsets {
    beta: usize,
    omega: usize,
    lxi_beta: usize,
    lxi_omega: usize,
    ltau: usize,
    la: usize,
}

#[derive(Clone, Debug)]
pub struct LowFrModel {
    spec: ModelSpec,
    data: ExposureDataset,
    layout: ParamLayout,
    off: Offsets,
    /// For each flat exposure index, the imputation slot if masked.
    slot_of: Vec<Option<usize>>,
    sex: Vec<f64>,
}

impl LowFrModel {
    pub fn new(spec: ModelSpec, data: &ExposureDataset) -> Result<Self> {
        spec.validate()?;
        if !spec.variant.is_factor_model() {
            return Err(Error::Usage("LowFrModel needs a factor-model variant".into()));
        }
        if data.n() != spec.n
            || data.p() != spec.p
            || data.times() != spec.times
            || data.n_covariates() != spec.n_covariates
            || data.missing_positions().len() != spec.n_missing
        {
            return Err(Error::Configuration("model spec does not match dataset".into()));
        }
        let (layout, off) = build_layout(&spec);
        let mut slot_of = vec![None; data.x().len()];
        for (slot, pos) in data.missing_positions().into_iter().enumerate() {
            slot_of[pos] = Some(slot);
        }
        let sex = match spec.variant {
            Variant::LowFrSexInt { sex_col } => (0..data.n()).map(|i| data.z_row(i)[sex_col]).collect(),
            _ => vec![0.0; data.n()],
        };
        Ok(Self {
            spec,
            data: data.clone(),
            layout,
            off,
            slot_of,
            sex,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn data(&self) -> &ExposureDataset {
        &self.data
    }

    /// Range of the imputed-exposure block in the parameter vector.
    pub fn missing_range(&self) -> Range<usize> {
        self.off.x_missing..self.off.x_missing + self.spec.n_missing
    }

    pub fn eta_range(&self) -> Range<usize> {
        self.off.eta..self.off.eta + self.spec.n * self.spec.latent_width()
    }

    /// Structured view of a constrained parameter vector.
    pub fn params(&self, constrained: &[f64]) -> Result<LowFrParams> {
        LowFrParams::from_constrained(&self.spec, &self.layout, constrained)
    }

    fn eval(&self, u: &[f64], g: &mut [f64]) -> Result<f64> {
        if u.len() != self.layout.dim() || g.len() != u.len() {
            return Err(Error::Layout {
                expected: self.layout.dim(),
                got: u.len(),
            });
        }
        g.iter_mut().for_each(|v| *v = 0.0);
        let s = &self.spec;
        let hy = s.hyper;
        let o = &self.off;
        let (n, p, tt, k, h1) = (s.n, s.p, s.times, s.k, s.h1);
        let kt = k * tt;
        let c_dim = s.n_covariates;
        let mut lp = 0.0;

        // Intercept and covariate coefficients.
        let mut blk = 0.0;
        for i in o.mu..o.mu + 1 + c_dim {
            let (v, d) = density::normal(u[i], hy.intercept_cov_var);
            blk += v;
            g[i] += d;
        }
        add(&mut lp, blk, "mu")?;

        // Main-effect MGP.
        let mut log_tau = vec![0.0; h1];
        let mut acc = 0.0;
        for (l, lt) in log_tau.iter_mut().enumerate() {
            acc += u[o.ldelta + l];
            *lt = acc;
        }
        let mut g_log_tau = vec![0.0; h1];
        let mut blk = 0.0;
        for l in 0..h1 {
            for h in 0..k {
                let (ix, ixi) = (o.beta + l * k + h, o.lxi_beta + l * k + h);
                let (v, dx, dl) = density::scaled_normal(u[ix], u[ixi], log_tau[l]);
                blk += v;
                g[ix] += dx;
                g[ixi] += dl;
                g_log_tau[l] += dl;
            }
            for t in 0..tt {
                let (ix, ixi) = (o.omega + l * tt + t, o.lxi_omega + l * tt + t);
                let (v, dx, dl) = density::scaled_normal(u[ix], u[ixi], log_tau[l]);
                blk += v;
                g[ix] += dx;
                g[ixi] += dl;
                g_log_tau[l] += dl;
            }
        }
        add(&mut lp, blk, "beta/omega")?;
        let mut blk = 0.0;
        for i in (o.lxi_beta..o.lxi_beta + h1 * k).chain(o.lxi_omega..o.lxi_omega + h1 * tt) {
            let (v, d) = density::gamma_log(u[i], hy.xi_shape, hy.xi_rate);
            blk += v;
            g[i] += d;
        }
        add(&mut lp, blk, "xi_beta/xi_omega")?;
        let mut suffix = 0.0;
        for l in (0..h1).rev() {
            suffix += g_log_tau[l];
            g[o.ldelta + l] += suffix;
        }
        let mut blk = 0.0;
        for l in 0..h1 {
            let shape_slot = if l == 0 { o.la1 } else { o.la2 };
            let (v, du, dls) = density::gamma_log_learned_shape(u[o.ldelta + l], u[shape_slot]);
            blk += v;
            g[o.ldelta + l] += du;
            g[shape_slot] += dls;
        }
        add(&mut lp, blk, "delta")?;
        let mut blk = 0.0;
        for i in [o.la1, o.la2] {
            let (v, d) = density::gamma_log(u[i], hy.a_shape, hy.a_rate);
            blk += v;
            g[i] += d;
        }
        add(&mut lp, blk, "a1/a2")?;

        // Interaction MGP (single level).
        let ltau_int = u[o.ldelta_int];
        let mut g_ltau_int = 0.0;
        let mut blk = 0.0;
        for (x0, xi0, len) in [(o.b, o.lxi_b, k * k), (o.w, o.lxi_w, tt * tt)] {
            for e in 0..len {
                let (v, dx, dl) = density::scaled_normal(u[x0 + e], u[xi0 + e], ltau_int);
                blk += v;
                g[x0 + e] += dx;
                g[xi0 + e] += dl;
                g_ltau_int += dl;
            }
        }
        add(&mut lp, blk, "B/W")?;
        let mut blk = 0.0;
        for i in (o.lxi_b..o.lxi_b + k * k).chain(o.lxi_w..o.lxi_w + tt * tt) {
            let (v, d) = density::gamma_log(u[i], hy.xi_shape, hy.xi_rate);
            blk += v;
            g[i] += d;
        }
        let (v, du, dls) = density::gamma_log_learned_shape(ltau_int, u[o.la_int]);
        blk += v;
        g[o.ldelta_int] += du + g_ltau_int;
        g[o.la_int] += dls;
        let (v, d) = density::gamma_log(u[o.la_int], hy.a_shape, hy.a_rate);
        blk += v;
        g[o.la_int] += d;
        add(&mut lp, blk, "delta_int")?;

        // Sex-interaction MGP.
        let mut theta_sex = vec![0.0; kt];
        if let Some(so) = &o.sex {
            let ltau = u[so.ltau];
            let mut g_ltau = 0.0;
            let mut blk = 0.0;
            for (x0, xi0, len) in [(so.beta, so.lxi_beta, k), (so.omega, so.lxi_omega, tt)] {
                for e in 0..len {
                    let (v, dx, dl) = density::scaled_normal(u[x0 + e], u[xi0 + e], ltau);
                    blk += v;
                    g[x0 + e] += dx;
                    g[xi0 + e] += dl;
                    g_ltau += dl;
                }
            }
            for i in (so.lxi_beta..so.lxi_beta + k).chain(so.lxi_omega..so.lxi_omega + tt) {
                let (v, d) = density::gamma_log(u[i], hy.xi_shape, hy.xi_rate);
                blk += v;
                g[i] += d;
            }
            let (v, du, dls) = density::gamma_log_learned_shape(ltau, u[so.la]);
            blk += v;
            g[so.ltau] += du + g_ltau;
            g[so.la] += dls;
            let (v, d) = density::gamma_log(u[so.la], hy.a_shape, hy.a_rate);
            blk += v;
            g[so.la] += d;
            add(&mut lp, blk, "sex_interaction")?;
            for h in 0..k {
                for t in 0..tt {
                    theta_sex[h * tt + t] = u[so.omega + t] * u[so.beta + h];
                }
            }
        }

        // Loadings and variances.
        let mut blk = 0.0;
        for i in o.lambda..o.lambda + p * k {
            let (v, d) = density::normal(u[i], hy.loading_var);
            blk += v;
            g[i] += d;
        }
        add(&mut lp, blk, "Lambda")?;
        let mut blk = 0.0;
        for i in o.lsigma2..o.lsigma2 + p + 1 {
            let (v, d) = density::inv_gamma_log(u[i], hy.ig_shape, hy.ig_rate);
            blk += v;
            g[i] += d;
        }
        add(&mut lp, blk, "sigma2")?;
        let (v, d) = density::uniform_logit(u[o.lphi]);
        add(&mut lp, v, "phi")?;
        g[o.lphi] += d;

        // Temporal correlation pieces: Φ⁻¹ = a(I − cJ).
        let phi = logistic(u[o.lphi]);
        let one_minus_phi = logistic(-u[o.lphi]);
        let t1 = (tt - 1) as f64;
        let a = 1.0 + u[o.lphi].exp();
        let denom = 1.0 + t1 * phi;
        let c = phi / denom;
        let dc = 1.0 / (denom * denom);
        let log_det = t1 * (-density_softplus(u[o.lphi])) + denom.ln();
        let dlog_det = -t1 / one_minus_phi + t1 / denom;
        let mut g_phi = 0.0;

        // Latent factor prior.
        let mut blk = 0.0;
        for i in 0..n {
            for h in 0..k {
                let base = o.eta + i * kt + h * tt;
                let v = &u[base..base + tt];
                let (sum, ss) = sums(v);
                let q0 = ss - c * sum * sum;
                blk -= 0.5 * a * q0;
                for t in 0..tt {
                    g[base + t] -= a * (v[t] - c * sum);
                }
                g_phi -= 0.5 * (a * a * q0 - a * sum * sum * dc);
            }
        }
        blk -= 0.5 * (n * k) as f64 * (log_det + tt as f64 * LN_2PI);
        add(&mut lp, blk, "eta")?;

        // Exposure likelihood.
        let w = p * tt;
        let mut xfull = self.data.x().to_vec();
        for (pos, slot) in self.slot_of.iter().enumerate() {
            if let Some(sl) = slot {
                xfull[pos] = u[o.x_missing + sl];
            }
        }
        let inv_s2: Vec<f64> = (0..p).map(|j| (-u[o.lsigma2 + j]).exp()).collect();
        let lam_all = &u[o.lambda..o.lambda + p * k];
        let eta_all = &u[o.eta..o.eta + n * kt];
        // Residuals R = X − E Λᵀ share the exposure layout; the products run
        // one time point at a time so every operand is a strided matrix.
        let mut r = xfull;
        for t in (0..tt).filter(|_| n > 0) {
            gemm(
                -1.0,
                View::new(&eta_all[t..], n, k, kt, tt),
                View::new(lam_all, k, p, 1, k),
                &mut r[t..],
                w,
                tt,
            );
        }
        let mut gr = vec![0.0; n * w];
        let mut blk = 0.0;
        for (ri, gri) in r.chunks_exact(w).zip(gr.chunks_exact_mut(w)) {
            for ((rij, grij), &is2) in ri.chunks_exact(tt).zip(gri.chunks_exact_mut(tt)).zip(&inv_s2) {
                let (sum, ss) = sums(rij);
                let q0 = ss - c * sum * sum;
                blk -= 0.5 * a * q0 * is2;
                g_phi -= 0.5 * is2 * (a * a * q0 - a * sum * sum * dc);
                for (gv, &rv) in grij.iter_mut().zip(rij) {
                    *gv = -a * (rv - c * sum) * is2;
                }
            }
        }
        for j in 0..p {
            let mut q = 0.0;
            for (ri, gri) in r.chunks_exact(w).zip(gr.chunks_exact(w)) {
                q -= dot(&ri[j * tt..(j + 1) * tt], &gri[j * tt..(j + 1) * tt]);
            }
            // ½aQ/σ² summed over subjects equals −½ Σ rᵀ gr.
            g[o.lsigma2 + j] += 0.5 * q;
        }
        let mut g_lam = vec![0.0; p * k];
        for t in (0..tt).filter(|_| n > 0) {
            gemm(
                -1.0,
                View::new(&gr[t..], n, p, w, tt),
                View::new(lam_all, p, k, k, 1),
                &mut g[o.eta + t..o.eta + n * kt],
                kt,
                tt,
            );
            gemm(
                -1.0,
                View::new(&gr[t..], p, n, tt, w),
                View::new(&eta_all[t..], n, k, kt, tt),
                &mut g_lam,
                k,
                1,
            );
        }
        for (gd, &gv) in g[o.lambda..o.lambda + p * k].iter_mut().zip(&g_lam) {
            *gd += gv;
        }
        for (pos, slot) in self.slot_of.iter().enumerate() {
            if let Some(sl) = slot {
                g[o.x_missing + sl] += gr[pos];
            }
        }
        let sum_log_s2: f64 = (0..p).map(|j| u[o.lsigma2 + j]).sum();
        blk -= 0.5 * n as f64 * (tt as f64 * sum_log_s2 + p as f64 * log_det + w as f64 * LN_2PI);
        for j in 0..p {
            g[o.lsigma2 + j] -= 0.5 * (n * tt) as f64;
        }
        g_phi -= 0.5 * (n * (k + p)) as f64 * dlog_det;
        add(&mut lp, blk, "x")?;

        g[o.lphi] += g_phi * phi * one_minus_phi;

        // Outcome likelihood.
        let mut theta = vec![0.0; kt];
        for l in 0..h1 {
            for h in 0..k {
                let bl = u[o.beta + l * k + h];
                for t in 0..tt {
                    theta[h * tt + t] += u[o.omega + l * tt + t] * bl;
                }
            }
        }
        let bm = &u[o.b..o.b + k * k];
        let wm = &u[o.w..o.w + tt * tt];
        let nk = n * k;
        let eta_all = &u[o.eta..o.eta + n * kt];
        // Per subject: BE = B·E, EW = E·W, M1 = BE·Wᵀ, M2 = Bᵀ·EW. Stacking
        // subjects, (subject, factor) rows of E form an nk × T matrix.
        let mut be = vec![0.0; n * kt];
        let mut ew = vec![0.0; n * kt];
        let mut m1 = vec![0.0; n * kt];
        let mut m2 = vec![0.0; n * kt];
        if n > 0 {
            gemm(1.0, View::new(eta_all, nk, tt, tt, 1), View::new(wm, tt, tt, tt, 1), &mut ew, tt, 1);
            for t in 0..tt {
                // Time slice of E as a k × n matrix.
                gemm(1.0, View::new(bm, k, k, k, 1), View::new(&eta_all[t..], k, n, tt, kt), &mut be[t..], tt, kt);
                gemm(1.0, View::new(bm, k, k, 1, k), View::new(&ew[t..], k, n, tt, kt), &mut m2[t..], tt, kt);
            }
            gemm(1.0, View::new(&be, nk, tt, tt, 1), View::new(wm, tt, tt, 1, tt), &mut m1, tt, 1);
        }
        let mut g_theta = vec![0.0; kt];
        let mut g_theta_sex = vec![0.0; kt];
        let mut wgts = vec![0.0; n];
        let s2y_inv = (-u[o.lsigma2_y]).exp();
        let mut blk = 0.0;
        for i in 0..n {
            let e = &eta_all[i * kt..(i + 1) * kt];
            let m1_i = &m1[i * kt..(i + 1) * kt];
            let si = self.sex[i];
            let mut lin = 0.0;
            let mut quad = 0.0;
            for idx in 0..kt {
                lin += (theta[idx] + si * theta_sex[idx]) * e[idx];
                quad += e[idx] * m1_i[idx];
            }
            let zi = self.data.z_row(i);
            let mean = u[o.mu] + lin + quad + dot(&u[o.cov..o.cov + zi.len()], zi);
            let resid = self.data.y()[i] - mean;
            let wgt = resid * s2y_inv;
            wgts[i] = wgt;
            blk -= 0.5 * resid * resid * s2y_inv;
            g[o.lsigma2_y] += 0.5 * resid * resid * s2y_inv;
            g[o.mu] += wgt;
            for (gc, &zv) in g[o.cov..o.cov + zi.len()].iter_mut().zip(zi) {
                *gc += wgt * zv;
            }
            let m2_i = &m2[i * kt..(i + 1) * kt];
            let ge = &mut g[o.eta + i * kt..o.eta + (i + 1) * kt];
            for idx in 0..kt {
                g_theta[idx] += wgt * e[idx];
                g_theta_sex[idx] += wgt * si * e[idx];
                ge[idx] += wgt * (theta[idx] + si * theta_sex[idx] + m1_i[idx] + m2_i[idx]);
            }
        }
        // dB = Σ wᵢ EWᵢ Eᵢᵀ and dW = Σ wᵢ Eᵢᵀ BEᵢ, with the weights folded
        // into EW and BE.
        for (i, &wgt) in wgts.iter().enumerate() {
            ew[i * kt..(i + 1) * kt].iter_mut().for_each(|v| *v *= wgt);
            be[i * kt..(i + 1) * kt].iter_mut().for_each(|v| *v *= wgt);
        }
        if n > 0 {
            for t in 0..tt {
                gemm(
                    1.0,
                    View::new(&ew[t..], k, n, tt, kt),
                    View::new(&eta_all[t..], n, k, kt, tt),
                    &mut g[o.b..o.b + k * k],
                    k,
                    1,
                );
            }
            gemm(
                1.0,
                View::new(eta_all, tt, nk, 1, tt),
                View::new(&be, nk, tt, tt, 1),
                &mut g[o.w..o.w + tt * tt],
                tt,
                1,
            );
        }
        blk -= 0.5 * n as f64 * (u[o.lsigma2_y] + LN_2PI);
        g[o.lsigma2_y] -= 0.5 * n as f64;
        add(&mut lp, blk, "y")?;

        for l in 0..h1 {
            for h in 0..k {
                for t in 0..tt {
                    let gt = g_theta[h * tt + t];
                    g[o.beta + l * k + h] += gt * u[o.omega + l * tt + t];
                    g[o.omega + l * tt + t] += gt * u[o.beta + l * k + h];
                }
            }
        }
        if let Some(so) = &o.sex {
            for h in 0..k {
                for t in 0..tt {
                    let gt = g_theta_sex[h * tt + t];
                    g[so.beta + h] += gt * u[so.omega + t];
                    g[so.omega + t] += gt * u[so.beta + h];
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

impl Posterior for LowFrModel {
    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.eval(u, grad)
    }
}

fn density_softplus(u: f64) -> f64 {
    super::layout::softplus(u)
}

#[inline]
fn sums(v: &[f64]) -> (f64, f64) {
    v.iter().fold((0.0, 0.0), |(s, ss), &x| (s + x, ss + x * x))
}

fn add(lp: &mut f64, v: f64, block: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Evaluation {
            block: block.to_string(),
        });
    }
    *lp += v;
    Ok(())
}

fn build_layout(spec: &ModelSpec) -> (ParamLayout, Offsets) {
    let (p, tt, k, h1) = (spec.p, spec.times, spec.k, spec.h1);
    let mut l = ParamLayout::new();
    let mu = l.push("mu", &[], Transform::Identity).start;
    let cov = l.push("cov", &[spec.n_covariates], Transform::Identity).start;
    let beta = l.push("beta", &[h1, k], Transform::Identity).start;
    let omega = l.push("omega", &[h1, tt], Transform::Identity).start;
    let lxi_beta = l.push("xi_beta", &[h1, k], Transform::Log).start;
    let lxi_omega = l.push("xi_omega", &[h1, tt], Transform::Log).start;
    let ldelta = l.push("delta", &[h1], Transform::Log).start;
    let la1 = l.push("a1", &[], Transform::Log).start;
    let la2 = l.push("a2", &[], Transform::Log).start;
    let b = l.push("B", &[k, k], Transform::Identity).start;
    let w = l.push("W", &[tt, tt], Transform::Identity).start;
    let lxi_b = l.push("xi_B", &[k, k], Transform::Log).start;
    let lxi_w = l.push("xi_W", &[tt, tt], Transform::Log).start;
    let ldelta_int = l.push("delta_int", &[], Transform::Log).start;
    let la_int = l.push("a_int", &[], Transform::Log).start;
    let lambda = l.push("Lambda", &[p, k], Transform::Identity).start;
    let lsigma2 = l.push("sigma2", &[p], Transform::Log).start;
    let lsigma2_y = l.push("sigma2_y", &[], Transform::Log).start;
    let lphi = l.push("phi", &[], Transform::Logit).start;
    let eta = l.push("eta", &[spec.n, k, tt], Transform::Identity).start;
    let x_missing = l.push("x_missing", &[spec.n_missing], Transform::Identity).start;
    let sex = match spec.variant {
        Variant::LowFrSexInt { .. } => Some(SexOffsets {
            beta: l.push("beta_sex", &[k], Transform::Identity).start,
            omega: l.push("omega_sex", &[tt], Transform::Identity).start,
            lxi_beta: l.push("xi_beta_sex", &[k], Transform::Log).start,
            lxi_omega: l.push("xi_omega_sex", &[tt], Transform::Log).start,
            ltau: l.push("tau_sex", &[], Transform::Log).start,
            la: l.push("a_sex", &[], Transform::Log).start,
        }),
        _ => None,
    };
    let off = Offsets {
        mu,
        cov,
        beta,
        omega,
        lxi_beta,
        lxi_omega,
        ldelta,
        la1,
        la2,
        b,
        w,
        lxi_b,
        lxi_w,
        ldelta_int,
        la_int,
        lambda,
        lsigma2,
        lsigma2_y,
        lphi,
        eta,
        x_missing,
        sex,
    };
    (l, off)
}

/// Constrained-scale parameters of one draw, as matrices.
#[derive(Clone, Debug)]
pub struct LowFrParams {
    pub mu: f64,
    pub cov: Vec<f64>,
    /// `H1 × k`, row `l` is `β_l`.
    pub beta: DenseMatrix<f64>,
    /// `H1 × T`, row `l` is `ω_l`.
    pub omega: DenseMatrix<f64>,
    pub b: DenseMatrix<f64>,
    pub w: DenseMatrix<f64>,
    pub lambda: DenseMatrix<f64>,
    pub sigma2: Vec<f64>,
    pub sigma2_y: f64,
    pub phi: CompoundSymmetric<f64>,
    /// `n × kT` latent factors.
    pub eta: Vec<f64>,
    pub beta_sex: Option<Vec<f64>>,
    pub omega_sex: Option<Vec<f64>>,
}

impl LowFrParams {
    pub fn from_constrained(spec: &ModelSpec, layout: &ParamLayout, v: &[f64]) -> Result<Self> {
        if v.len() != layout.dim() {
            return Err(Error::Layout {
                expected: layout.dim(),
                got: v.len(),
            });
        }
        let get = |name: &str| -> Result<&[f64]> {
            let r = layout
                .range(name)
                .ok_or_else(|| Error::Usage(format!("layout has no block `{name}`")))?;
            Ok(&v[r])
        };
        let (p, tt, k, h1) = (spec.p, spec.times, spec.k, spec.h1);
        let mat = |name: &str, r: usize, c: usize| -> Result<DenseMatrix<f64>> {
            DenseMatrix::new(r, c, get(name)?.to_vec())
        };
        let sex = layout.block("beta_sex").is_some();
        Ok(Self {
            mu: get("mu")?[0],
            cov: get("cov")?.to_vec(),
            beta: mat("beta", h1, k)?,
            omega: mat("omega", h1, tt)?,
            b: mat("B", k, k)?,
            w: mat("W", tt, tt)?,
            lambda: mat("Lambda", p, k)?,
            sigma2: get("sigma2")?.to_vec(),
            sigma2_y: get("sigma2_y")?[0],
            phi: CompoundSymmetric::new(tt, get("phi")?[0])?,
            eta: get("eta")?.to_vec(),
            beta_sex: if sex { Some(get("beta_sex")?.to_vec()) } else { None },
            omega_sex: if sex { Some(get("omega_sex")?.to_vec()) } else { None },
        })
    }

    /// `θ = vec(Σ_l ω_l β_lᵀ)` indexed `h·T + t`.
    pub fn theta(&self) -> Vec<f64> {
        theta_from_factors(&self.beta, &self.omega)
    }

    pub fn theta_sex(&self) -> Option<Vec<f64>> {
        let (b, w) = (self.beta_sex.as_ref()?, self.omega_sex.as_ref()?);
        let mut out = vec![0.0; b.len() * w.len()];
        for (h, &bh) in b.iter().enumerate() {
            for (t, &wt) in w.iter().enumerate() {
                out[h * w.len() + t] = wt * bh;
            }
        }
        Some(out)
    }
}

/// `vec(Σ_l ω_l β_lᵀ)` for factor matrices stored one factor per row;
/// entry `(j, t)` sits at `j·T + t`.
pub fn theta_from_factors(beta: &DenseMatrix<f64>, omega: &DenseMatrix<f64>) -> Vec<f64> {
    let (rank, width, tt) = (beta.rows(), beta.cols(), omega.cols());
    let mut out = vec![0.0; width * tt];
    for l in 0..rank {
        for j in 0..width {
            for t in 0..tt {
                out[j * tt + t] += omega[(l, t)] * beta[(l, j)];
            }
        }
    }
    out
}

pub(crate) fn lowfr_layout(spec: &ModelSpec) -> ParamLayout {
    build_layout(spec).0
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Read-only strided matrix over the front of a slice.
struct View<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> View<'a> {
    fn new(data: &'a [f64], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        assert!(rows == 0 || cols == 0 || (rows - 1) * rs + (cols - 1) * cs < data.len());
        Self { data, rows, cols, rs, cs }
    }
}

/// `C += alpha · A B` with `C` strided over the front of `c`.
fn gemm(alpha: f64, a: View<'_>, b: View<'_>, c: &mut [f64], rsc: usize, csc: usize) {
    assert_eq!(a.cols, b.rows);
    let (m, kk, nn) = (a.rows, a.cols, b.cols);
    if m == 0 || nn == 0 {
        return;
    }
    assert!((m - 1) * rsc + (nn - 1) * csc < c.len());
    // SAFETY: the asserts above keep every strided access inside its slice,
    // and `c` is a unique borrow distinct from `a` and `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            kk,
            nn,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            1.0,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
