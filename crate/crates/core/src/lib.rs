pub mod cqr;
pub mod data;
pub mod effects;
pub mod error;
pub mod fit;
pub mod induced;
pub mod linalg;
pub mod model;
pub mod sampler;
pub mod scalar;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// The f64 instantiations used by the models and the sampler.
pub type Matrix = linalg::DenseMatrix<f64>;
pub type CsMatrix = linalg::CompoundSymmetric<f64>;
pub type Coefficients = induced::InducedCoefficients<f64>;
