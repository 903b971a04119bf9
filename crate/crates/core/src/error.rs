//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Metric tensor failed symmetry or ellipticity validation.
    #[error("metric: {0}")]
    Metric(String),

    /// Bad curve or domain data (non-positive radius, curves touching, ...).
    #[error("geometry: {0}")]
    Geometry(String),

    #[error("mesh: {0}")]
    Mesh(String),

    /// The bilinear form has no coercivity source: q vanishes on both
    /// boundary components and the absorption coefficient is zero.
    #[error("coercivity guard: {0}")]
    Coercivity(String),

    #[error("solver: relative residual {residual:.3e} after {iterations} iterations (cap reached)")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Unregularized inversion attempted on a numerically rank-deficient map.
    #[error("ill-conditioned forward map: sigma_min = {sigma_min:.3e}; use a Tikhonov weight or a smaller cutoff")]
    IllConditioned { sigma_min: f64 },

    /// The solution trace on the inner boundary dipped below the positivity
    /// floor, so the coefficient update would divide by (nearly) zero.
    #[error("positivity: min u on S = {min_u:.3e} at iteration {iteration}")]
    Positivity { min_u: f64, iteration: usize },

    /// Mismatch failed to decrease over several iterations while the updates
    /// were still large: the fixed-point iteration is diverging.
    #[error("stagnation after {iterations} iterations: {detail}")]
    Stagnation { iterations: usize, detail: String },

    /// Two boundary-sampled objects live on different node sets or sides.
    #[error("boundary mismatch: {0}")]
    BoundaryMismatch(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
