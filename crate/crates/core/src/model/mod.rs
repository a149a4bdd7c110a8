//! Model definitions: the longitudinal factor regression, its sex-interaction
//! extension, and the direct low-rank linear regressions.

pub mod density;
mod direct;
mod layout;
mod lowfr;
mod prior;
mod select;
mod spec;

use rand::Rng;

use crate::error::Result;

pub use direct::DirectModel;
pub use layout::{logistic, Block, ParamLayout, Transform, SATURATION_LIMIT};
pub use lowfr::{LowFrModel, LowFrParams};
pub use prior::{prior_sample, prior_sample_with_fixed_shapes};
pub use select::{factorize_rank, select_k, singular_values};
pub use lowfr::theta_from_factors;
pub use spec::{DirectRank, HyperParams, ModelSpec, Variant};

/// Parameter layout of a model instance.
pub fn layout_for(spec: &ModelSpec) -> ParamLayout {
    if spec.variant.is_factor_model() {
        lowfr::lowfr_layout(spec)
    } else {
        direct::direct_layout(spec)
    }
}

/// A differentiable log density over an unconstrained parameter vector.
pub trait Posterior: Sync {
    fn layout(&self) -> &ParamLayout;

    /// Log density at `u`; the gradient is written into `grad`.
    fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> Result<f64>;

    fn dim(&self) -> usize {
        self.layout().dim()
    }

    fn log_density(&self, u: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; u.len()];
        self.log_density_grad(u, &mut g)
    }

    /// Starting point: `Uniform(−1, 1)` everywhere except latent factors,
    /// imputed exposures and variance slots, which start at zero.
    fn initial_point(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let layout = self.layout();
        let mut u = vec![0.0; layout.dim()];
        for b in layout.blocks() {
            let zero = b.name == "eta"
                || b.name == "x_missing"
                || (b.transform == Transform::Log && is_variance(&b.name));
            for i in b.range() {
                u[i] = if zero { 0.0 } else { rng.random_range(-1.0..1.0) };
            }
        }
        u
    }

    fn constrain(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.layout().to_constrained(u)
    }
}

fn is_variance(name: &str) -> bool {
    name.starts_with("sigma2") || name.starts_with("nu_")
}
