//! Euclidean metrics: the inverse mass matrix is either diagonal or dense.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, DenseMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MetricKind {
    #[default]
    Diag,
    Dense,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Diag => "diag",
            MetricKind::Dense => "dense",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diag" => Ok(MetricKind::Diag),
            "dense" => Ok(MetricKind::Dense),
            _ => Err(Error::Usage(format!("unknown metric `{s}` (expected diag or dense)"))),
        }
    }
}

/// Inverse mass matrix. Momenta are drawn from `N(0, M)` with
/// `M = inverse⁻¹`.
#[derive(Clone, Debug)]
pub enum Metric {
    Diag(Vec<f64>),
    Dense {
        inverse: DenseMatrix<f64>,
        chol: Cholesky<f64>,
    },
}

impl Metric {
    pub fn unit(kind: MetricKind, dim: usize) -> Self {
        match kind {
            MetricKind::Diag => Metric::Diag(vec![1.0; dim]),
            MetricKind::Dense => Metric::dense(DenseMatrix::identity(dim)).expect("identity is positive definite"),
        }
    }

    pub fn diag(inverse: Vec<f64>) -> Self {
        Metric::Diag(inverse)
    }

    pub fn dense(inverse: DenseMatrix<f64>) -> Result<Self> {
        let chol = inverse
            .cholesky()
            .map_err(|_| Error::FitFailure("estimated dense metric is not positive definite".into()))?;
        Ok(Metric::Dense { inverse, chol })
    }

    pub fn kind(&self) -> MetricKind {
        match self {
            Metric::Diag(_) => MetricKind::Diag,
            Metric::Dense { .. } => MetricKind::Dense,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Metric::Diag(v) => v.len(),
            Metric::Dense { inverse, .. } => inverse.rows(),
        }
    }

    /// Diagonal of the inverse mass matrix.
    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            Metric::Diag(v) => v.clone(),
            Metric::Dense { inverse, .. } => (0..inverse.rows()).map(|i| inverse[(i, i)]).collect(),
        }
    }

    /// `M⁻¹ p`.
    pub fn velocity(&self, p: &[f64]) -> Vec<f64> {
        match self {
            Metric::Diag(v) => p.iter().zip(v).map(|(p, m)| p * m).collect(),
            Metric::Dense { inverse, .. } => inverse.matvec(p).expect("momentum length matches metric"),
        }
    }

    pub fn kinetic(&self, p: &[f64]) -> f64 {
        match self {
            Metric::Diag(v) => 0.5 * p.iter().zip(v).map(|(p, m)| p * p * m).sum::<f64>(),
            Metric::Dense { .. } => 0.5 * p.iter().zip(self.velocity(p)).map(|(a, b)| a * b).sum::<f64>(),
        }
    }

    pub fn sample_momentum<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        match self {
            Metric::Diag(v) => z.iter().zip(v).map(|(z, m)| z / m.sqrt()).collect(),
            // inverse = L Lᵀ, so L⁻ᵀ z has covariance (L Lᵀ)⁻¹.
            Metric::Dense { chol, .. } => chol.backward(&z),
        }
    }
}

impl From<Vec<f64>> for Metric {
    fn from(v: Vec<f64>) -> Self {
        Metric::Diag(v)
    }
}
