//! Log densities on the unconstrained scale, each returning the value and
//! its derivative with respect to the unconstrained coordinate. Jacobian
//! terms of the log / logit transforms are included.

use statrs::function::gamma::{digamma, ln_gamma};

use super::layout::{logistic, softplus};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log N(x | 0, var)` and `d/dx`.
#[inline]
pub fn normal(x: f64, var: f64) -> (f64, f64) {
    (-0.5 * (LN_2PI + var.ln() + x * x / var), -x / var)
}

/// `v = exp(u)`, `v ~ Gamma(shape, rate)`: value and `d/du`.
#[inline]
pub fn gamma_log(u: f64, shape: f64, rate: f64) -> (f64, f64) {
    let v = u.exp();
    (
        shape * rate.ln() - ln_gamma(shape) + shape * u - rate * v,
        shape - rate * v,
    )
}

/// `v = exp(u)`, `v ~ Gamma(shape = exp(ls), rate = 1)`: value and the
/// derivatives with respect to `u` and `ls`.
#[inline]
pub fn gamma_log_learned_shape(u: f64, ls: f64) -> (f64, f64, f64) {
    let shape = ls.exp();
    let v = u.exp();
    (
        -ln_gamma(shape) + shape * u - v,
        shape - v,
        shape * (u - digamma(shape)),
    )
}

/// `v = exp(u)`, `v ~ InvGamma(shape, rate)`: value and `d/du`.
#[inline]
pub fn inv_gamma_log(u: f64, shape: f64, rate: f64) -> (f64, f64) {
    let inv = (-u).exp();
    (
        shape * rate.ln() - ln_gamma(shape) - shape * u - rate * inv,
        -shape + rate * inv,
    )
}

/// `v = logistic(u)`, `v ~ Uniform(0, 1)`: value and `d/du`.
#[inline]
pub fn uniform_logit(u: f64) -> (f64, f64) {
    (-softplus(-u) - softplus(u), 1.0 - 2.0 * logistic(u))
}

/// `x ~ N(0, 1/(ξτ))` with `ξ = exp(log_xi)`, `τ = exp(log_tau)`.
/// Returns the value and the derivatives with respect to `x`, `log_xi`
/// and `log_tau` (the latter two are equal).
#[inline]
pub fn scaled_normal(x: f64, log_xi: f64, log_tau: f64) -> (f64, f64, f64) {
    let prec = (log_xi + log_tau).exp();
    let half_q = 0.5 * prec * x * x;
    (
        0.5 * (log_xi + log_tau - LN_2PI) - half_q,
        -prec * x,
        0.5 - half_q,
    )
}
