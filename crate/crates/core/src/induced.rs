//! Induced regression of `y` on `x` implied by the latent factor model.
//!
//! With `x_i = (Λ ⊗ I_T) η_i + ε_i`, `η_i ~ N(0, I_k ⊗ Φ)` and
//! `ε_i ~ N(0, Σ ⊗ Φ)`, the conditional `η_i | x_i` is Gaussian with mean
//! `A x_i` and covariance `V`. Plugging it into
//! `E[y | η] = μ + θᵀη + ηᵀΩη` gives a quadratic regression in `x`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{kron, CompoundSymmetric, DenseMatrix};
use crate::model::{LowFrParams, ModelSpec, ParamLayout, Variant};
use crate::scalar::Scalar;

/// Conditional distribution of `η_i` given `x_i`: mean `A x_i`, covariance `V`.
#[derive(Clone, Debug)]
pub struct ConditionalMap<S> {
    /// `kT × pT`.
    pub a: DenseMatrix<S>,
    /// `kT × kT`.
    pub v: DenseMatrix<S>,
    /// `Ã` (`k × p`) and `Ṽ` (`k × k`) when `A = Ã ⊗ I_T`, `V = Ṽ ⊗ Φ`.
    pub factors: Option<(DenseMatrix<S>, DenseMatrix<S>)>,
}

fn check_sigma2<S: Scalar>(sigma2: &[S], p: usize) -> Result<()> {
    if sigma2.len() != p {
        return Err(Error::Dimension(format!("{} noise variances for {p} exposures", sigma2.len())));
    }
    if sigma2.iter().any(|s| !(*s > S::zero()) || !s.is_finite()) {
        return Err(Error::Domain("noise variances must be positive".into()));
    }
    Ok(())
}

/// `Ṽ = (ΛᵀΣ⁻¹Λ + I)⁻¹` and `Ã = ṼΛᵀΣ⁻¹`.
pub fn conditional_factors<S: Scalar>(
    lambda: &DenseMatrix<S>,
    sigma2: &[S],
) -> Result<(DenseMatrix<S>, DenseMatrix<S>)> {
    let (p, k) = (lambda.rows(), lambda.cols());
    check_sigma2(sigma2, p)?;
    let scaled = DenseMatrix::from_fn(k, p, |h, j| lambda[(j, h)] / sigma2[j]);
    let mut prec = scaled.matmul(lambda)?;
    for h in 0..k {
        prec[(h, h)] += S::one();
    }
    let v = prec.symmetrize()?.inverse_spd()?;
    let a = v.matmul(&scaled)?;
    Ok((a, v))
}

pub fn conditional_eta<S: Scalar>(
    lambda: &DenseMatrix<S>,
    sigma2: &[S],
    phi: &CompoundSymmetric<S>,
) -> Result<ConditionalMap<S>> {
    let (a_small, v_small) = conditional_factors(lambda, sigma2)?;
    let tt = phi.dim();
    let a = kron(&a_small, &DenseMatrix::identity(tt))?;
    let v = kron(&v_small, &phi.to_dense())?;
    Ok(ConditionalMap {
        a,
        v,
        factors: Some((a_small, v_small)),
    })
}

/// Conditional for arbitrary SPD `Cov(ε_i)` (`pT × pT`) and `Cov(η_i)`
/// (`kT × kT`).
pub fn conditional_eta_general<S: Scalar>(
    lambda: &DenseMatrix<S>,
    psi_eps: &DenseMatrix<S>,
    psi_eta: &DenseMatrix<S>,
) -> Result<ConditionalMap<S>> {
    let (p, k) = (lambda.rows(), lambda.cols());
    if !psi_eps.is_square() || !psi_eta.is_square() || psi_eta.rows() % k.max(1) != 0 {
        return Err(Error::Dimension("covariance blocks must be square".into()));
    }
    let tt = psi_eta.rows() / k;
    if psi_eps.rows() != p * tt {
        return Err(Error::Dimension(format!(
            "noise covariance is {}×{}, expected {}",
            psi_eps.rows(),
            psi_eps.rows(),
            p * tt
        )));
    }
    let spd = |m: &DenseMatrix<S>, what: &str| -> Result<DenseMatrix<S>> {
        if !m.is_symmetric(S::of(1e-10) * (S::one() + m.max_abs())) {
            return Err(Error::Domain(format!("{what} covariance is not symmetric")));
        }
        m.inverse_spd()
            .map_err(|_| Error::Domain(format!("{what} covariance is not positive definite")))
    };
    let eps_inv = spd(psi_eps, "noise")?;
    let eta_inv = spd(psi_eta, "factor")?;
    let l = kron(lambda, &DenseMatrix::identity(tt))?;
    let lt_e = l.transpose().matmul(&eps_inv)?;
    let prec = lt_e.matmul(&l)?.add(&eta_inv)?.symmetrize()?;
    let v = prec
        .inverse_spd()
        .map_err(|_| Error::Domain("conditional precision is not positive definite".into()))?;
    let a = v.matmul(&lt_e)?;
    Ok(ConditionalMap { a, v, factors: None })
}

/// `E[y | x] = α0 + αᵀx + xᵀΓx` with `α`, `Γ` indexed like `x`
/// (`j·T + t`) and `Γ` symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct InducedCoefficients<S> {
    pub alpha0: S,
    pub alpha: Vec<S>,
    pub gamma: DenseMatrix<S>,
}

impl<S: Scalar> InducedCoefficients<S> {
    pub fn zero(width: usize) -> Self {
        Self {
            alpha0: S::zero(),
            alpha: vec![S::zero(); width],
            gamma: DenseMatrix::zeros(width, width),
        }
    }

    pub fn width(&self) -> usize {
        self.alpha.len()
    }

    pub fn mean_at(&self, x: &[S]) -> S {
        let lin: S = self.alpha.iter().zip(x).map(|(a, v)| *a * *v).sum();
        self.alpha0 + lin + self.gamma.quad_form(x).expect("x has the coefficient width")
    }

    /// Coefficient on `x_a · x_b`: `Γ_aa` on the diagonal, `2Γ_ab` off it.
    pub fn interaction(&self, a: usize, b: usize) -> S {
        if a == b {
            self.gamma[(a, a)]
        } else {
            S::of(2.0) * self.gamma[(a, b)]
        }
    }

    /// Upper triangle of `Γ`, row by row (`(0,0), (0,1), …, (1,1), …`).
    pub fn gamma_upper(&self) -> Vec<S> {
        upper_pairs(self.width()).into_iter().map(|(a, b)| self.gamma[(a, b)]).collect()
    }

    pub fn from_upper(alpha0: S, alpha: Vec<S>, upper: &[S]) -> Result<Self> {
        let w = alpha.len();
        if upper.len() != w * (w + 1) / 2 {
            return Err(Error::Dimension(format!(
                "{} upper-triangular entries for width {w}",
                upper.len()
            )));
        }
        let mut gamma = DenseMatrix::zeros(w, w);
        for (&(a, b), &v) in upper_pairs(w).iter().zip(upper) {
            gamma[(a, b)] = v;
            gamma[(b, a)] = v;
        }
        Ok(Self { alpha0, alpha, gamma })
    }
}

/// Index map of [`InducedCoefficients::gamma_upper`].
pub fn upper_pairs(width: usize) -> Vec<(usize, usize)> {
    (0..width).flat_map(|a| (a..width).map(move |b| (a, b))).collect()
}

/// Induced coefficients from the generating quantities: `θ` (`kT`, indexed
/// `h·T + t`), `Ω = B ⊗ W`, loadings, noise variances and `Φ`.
pub fn induced_from_parts<S: Scalar>(
    mu: S,
    theta: &[S],
    b: &DenseMatrix<S>,
    w: &DenseMatrix<S>,
    lambda: &DenseMatrix<S>,
    sigma2: &[S],
    phi: &CompoundSymmetric<S>,
) -> Result<InducedCoefficients<S>> {
    let (p, k, tt) = (lambda.rows(), lambda.cols(), phi.dim());
    if theta.len() != k * tt || b.rows() != k || b.cols() != k || w.rows() != tt || w.cols() != tt {
        return Err(Error::Dimension("coefficient shapes do not match k and T".into()));
    }
    let (a, v) = conditional_factors(lambda, sigma2)?;
    let mut alpha = vec![S::zero(); p * tt];
    for j in 0..p {
        for t in 0..tt {
            alpha[j * tt + t] = (0..k).map(|h| a[(h, j)] * theta[h * tt + t]).sum();
        }
    }
    let b_tilde = a.transpose().matmul(b)?.matmul(&a)?;
    // Symmetrize B̃ ⊗ W as a whole; (B̃ ⊗ W)ᵀ = B̃ᵀ ⊗ Wᵀ.
    let half = S::of(0.5);
    let gamma = DenseMatrix::from_fn(p * tt, p * tt, |r, c| {
        let (jr, tr, jc, tc) = (r / tt, r % tt, c / tt, c % tt);
        half * (b_tilde[(jr, jc)] * w[(tr, tc)] + b_tilde[(jc, jr)] * w[(tc, tr)])
    });
    let phi_d = phi.to_dense();
    let alpha0 = mu + b.matmul(&v)?.trace()? * w.matmul(&phi_d)?.trace()?;
    Ok(InducedCoefficients { alpha0, alpha, gamma })
}

pub fn induced_from_params(params: &LowFrParams) -> Result<InducedCoefficients<f64>> {
    induced_from_parts(
        params.mu,
        &params.theta(),
        &params.b,
        &params.w,
        &params.lambda,
        &params.sigma2,
        &params.phi,
    )
}

fn require_factor_model(spec: &ModelSpec) -> Result<()> {
    if !spec.variant.is_factor_model() {
        return Err(Error::Usage("induced coefficients need a LowFR fit".into()));
    }
    Ok(())
}

/// Induced coefficients of one constrained draw (reference group for the
/// sex-interaction variant).
pub fn induced_coefficients(spec: &ModelSpec, layout: &ParamLayout, draw: &[f64]) -> Result<InducedCoefficients<f64>> {
    require_factor_model(spec)?;
    induced_from_params(&LowFrParams::from_constrained(spec, layout, draw)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    Reference,
    Flagged,
}

/// Group-specific induced coefficients: the flagged group adds the
/// rank-one interaction `ω_int β_intᵀ` to `θ`.
pub fn group_induced(
    spec: &ModelSpec,
    layout: &ParamLayout,
    draw: &[f64],
    group: Group,
) -> Result<InducedCoefficients<f64>> {
    if !matches!(spec.variant, Variant::LowFrSexInt { .. }) {
        return Err(Error::Usage("group effects need the sex-interaction variant".into()));
    }
    let params = LowFrParams::from_constrained(spec, layout, draw)?;
    let mut theta = params.theta();
    if group == Group::Flagged {
        let extra = params
            .theta_sex()
            .ok_or_else(|| Error::Usage("draw has no interaction vectors".into()))?;
        theta.iter_mut().zip(&extra).for_each(|(t, e)| *t += e);
    }
    induced_from_parts(
        params.mu,
        &theta,
        &params.b,
        &params.w,
        &params.lambda,
        &params.sigma2,
        &params.phi,
    )
}

/// Induced coefficients for every draw, in draw order.
pub fn induced_draws<'a, I>(spec: &ModelSpec, layout: &ParamLayout, draws: I) -> Result<Vec<InducedCoefficients<f64>>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    require_factor_model(spec)?;
    let rows: Vec<&[f64]> = draws.into_iter().collect();
    rows.par_iter().map(|d| induced_coefficients(spec, layout, d)).collect()
}
