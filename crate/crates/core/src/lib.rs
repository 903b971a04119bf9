//! robinlab: forward and inverse Robin boundary problems on annular domains.
//!
//! The library solves
//!
//! ```text
//!   -Delta_g u = f          in D = Omega \ closure(B),
//!   d_{nu_g} u + q u = a    on  dD = S u Gamma,
//! ```
//!
//! where D is the region between two star-shaped curves (inner boundary S,
//! outer boundary Gamma) and g is a symmetric elliptic metric.  On top of
//! the forward solvers (P1 finite elements on structured meshes, and a
//! separation-of-variables backend for concentric circles) it provides:
//!
//! * boundary calculus: Laplace-Beltrami eigenbases on the boundary loops,
//!   spectral Sobolev norms H^t, tangential gradients, and the Cauchy
//!   measurement functional C(w) = ||w||_{H^1(Gamma)} + ||d_nu w||_{L^2(Gamma)};
//! * inverse solvers: flux recovery on S from Cauchy data on Gamma, and a
//!   fixed-point reconstruction of the Robin coefficient q on S;
//! * a stability laboratory that measures decay rates of the forward map's
//!   singular values, fits the constants of Lipschitz and logarithmic
//!   stability inequalities, and audits maximum-principle and energy bounds.

pub mod boundary;
pub mod curve;
pub mod error;
pub mod fem;
pub mod inverse;
pub mod mesh;
pub mod metric;
pub mod report;
pub mod solver;
pub mod spectral;
pub mod stability;

pub use curve::{AnnularDomain, StarCurve};
pub use error::{Error, Result};
pub use mesh::{boundary_normals, build_annular_mesh, BoundaryLoop, BoundaryTag, Mesh};
pub use metric::MetricTensor;
