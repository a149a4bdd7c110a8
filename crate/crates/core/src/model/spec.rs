use crate::data::ExposureDataset;
use crate::error::{Error, Result};

/// Rank of the coefficient matrix in the direct (no factor model) regression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectRank {
    Rank(usize),
    /// Unstructured coefficients, one per `(exposure, time)` measurement.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Longitudinal factor model with low-rank main effects and a Kronecker interaction.
    LowFr,
    /// As `LowFr`, plus rank-1 interactions between every exposure and the binary
    /// covariate at index `sex_col`.
    LowFrSexInt { sex_col: usize },
    /// `y = μ + θᵀx + ε` with `θ` factored at the given rank.
    Direct(DirectRank),
}

impl Variant {
    pub fn is_factor_model(&self) -> bool {
        matches!(self, Variant::LowFr | Variant::LowFrSexInt { .. })
    }
}

/// Prior hyperparameters. Normal entries are variances; gamma entries use
/// shape/rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperParams {
    pub loading_var: f64,
    pub intercept_cov_var: f64,
    pub ig_shape: f64,
    pub ig_rate: f64,
    pub xi_shape: f64,
    pub xi_rate: f64,
    pub a_shape: f64,
    pub a_rate: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            loading_var: 10.0,
            intercept_cov_var: 10.0,
            ig_shape: 1.0,
            ig_rate: 1.0,
            xi_shape: 1.5,
            xi_rate: 1.5,
            a_shape: 2.0,
            a_rate: 1.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.loading_var,
            self.intercept_cov_var,
            self.ig_shape,
            self.ig_rate,
            self.xi_shape,
            self.xi_rate,
            self.a_shape,
            self.a_rate,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Configuration("hyperparameters must be strictly positive".into()))
        }
    }
}

/// Dimensions and variant of a model instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub n: usize,
    pub p: usize,
    pub times: usize,
    pub k: usize,
    /// Rank of the main-effect decomposition.
    pub h1: usize,
    /// Number of interaction Kronecker terms; fixed at 1.
    pub h2: usize,
    pub n_covariates: usize,
    pub n_missing: usize,
    pub variant: Variant,
    pub hyper: HyperParams,
}

impl ModelSpec {
    /// Spec for `data` with `h1 = min(p, T)` and `h2 = 1`. `k` is ignored for
    /// direct variants.
    pub fn for_data(data: &ExposureDataset, k: usize, variant: Variant) -> Result<Self> {
        let spec = Self {
            n: data.n(),
            p: data.p(),
            times: data.times(),
            k: if variant.is_factor_model() { k } else { 0 },
            h1: data.p().min(data.times()),
            h2: 1,
            n_covariates: data.n_covariates(),
            n_missing: if variant.is_factor_model() {
                data.missing_positions().len()
            } else {
                0
            },
            variant,
            hyper: HyperParams::default(),
        };
        spec.validate()?;
        if let Variant::LowFrSexInt { sex_col } = variant {
            let binary = (0..data.n()).all(|i| {
                let v = data.z_row(i)[sex_col];
                v == 0.0 || v == 1.0
            });
            if !binary {
                return Err(Error::Configuration(format!(
                    "covariate `{}` must be coded 0/1 for sex interactions",
                    data.covariate_names()[sex_col]
                )));
            }
        }
        if !variant.is_factor_model() && data.has_missing() {
            return Err(Error::Configuration(
                "direct regression needs complete exposures; impute first".into(),
            ));
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.p == 0 || self.times == 0 {
            return Err(Error::Configuration("p and T must be positive".into()));
        }
        match self.variant {
            Variant::LowFr | Variant::LowFrSexInt { .. } => {
                if self.k == 0 || self.k > self.p {
                    return Err(Error::Configuration(format!(
                        "k = {} must satisfy 1 <= k <= p = {}",
                        self.k, self.p
                    )));
                }
                if self.h1 == 0 {
                    return Err(Error::Configuration("h1 must be positive".into()));
                }
            }
            Variant::Direct(DirectRank::Rank(r)) => {
                if r == 0 || r > self.p.min(self.times) {
                    return Err(Error::Configuration(format!(
                        "rank {r} must be in 1..={}",
                        self.p.min(self.times)
                    )));
                }
            }
            Variant::Direct(DirectRank::Full) => {}
        }
        if self.h2 != 1 {
            return Err(Error::Configuration("only h2 = 1 is supported".into()));
        }
        if let Variant::LowFrSexInt { sex_col } = self.variant {
            if sex_col >= self.n_covariates {
                return Err(Error::Configuration("sex column index out of range".into()));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.p * self.times
    }

    /// Length of each subject's latent vector, `k·T`.
    pub fn latent_width(&self) -> usize {
        self.k * self.times
    }
}
