//! Symmetric elliptic metric tensors g on the plane.
//!
//! A metric here is a symmetric matrix field g(x) with a uniform ellipticity
//! constant theta:
//!
//! ```text
//!   theta |xi|^2 <= g_jk(x) xi_j xi_k <= theta^-1 |xi|^2 .
//! ```
//!
//! The differential operators downstream only ever need pointwise data:
//! g, its inverse, and sqrt(det g).  The conormal direction of a unit
//! Euclidean normal nu is
//!
//! ```text
//!   (nu_g)^j = g^jk nu_k / sqrt(g^lm nu_l nu_m),
//! ```
//!
//! normalized so that |nu_g|_g = 1 and <nu_g, nu>_g > 0.

use crate::error::{Error, Result};

/// Pointwise metric data at a position: the matrix, its inverse and
/// sqrt(det g).  Everything downstream consumes this record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricData {
    pub g: [[f64; 2]; 2],
    pub g_inv: [[f64; 2]; 2],
    pub sqrt_det: f64,
}

/// Metric tensor field. The supported shapes cover the experiments: the
/// Euclidean case, an arbitrary constant SPD matrix, and a conformal family
/// (1 + a sin x) I that is smooth and non-constant.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricTensor {
    Identity,
    Constant { g: [[f64; 2]; 2], theta: f64 },
    /// g(x, y) = (1 + amplitude * sin x) * I, |amplitude| < 1.
    SineConformal { amplitude: f64 },
}

fn sym_eigenvalues(g: &[[f64; 2]; 2]) -> (f64, f64) {
    let tr = g[0][0] + g[1][1];
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 - disc, tr / 2.0 + disc)
}

impl MetricTensor {
    /// Constant metric, validated: symmetric entries and positive definite.
    pub fn constant(g: [[f64; 2]; 2]) -> Result<Self> {
        let asym = (g[0][1] - g[1][0]).abs();
        if asym > 1e-14 * (1.0 + g[0][1].abs() + g[1][0].abs()) {
            return Err(Error::Metric(format!(
                "constant metric is not symmetric: g01 = {}, g10 = {}",
                g[0][1], g[1][0]
            )));
        }
        let (lo, hi) = sym_eigenvalues(&g);
        if !(lo > 0.0) {
            return Err(Error::Metric(format!(
                "constant metric is not positive definite: smallest eigenvalue {lo:.6e}"
            )));
        }
        // theta from the actual spectrum; valid for both bounds.
        let theta = lo.min(1.0 / hi);
        Ok(MetricTensor::Constant { g, theta })
    }

    pub fn sine_conformal(amplitude: f64) -> Result<Self> {
        if !(amplitude.abs() < 1.0) {
            return Err(Error::Metric(format!(
                "sine-conformal amplitude must satisfy |a| < 1, got {amplitude}"
            )));
        }
        Ok(MetricTensor::SineConformal { amplitude })
    }

    /// Uniform ellipticity constant of the family.
    pub fn theta(&self) -> f64 {
        match self {
            MetricTensor::Identity => 1.0,
            MetricTensor::Constant { theta, .. } => *theta,
            MetricTensor::SineConformal { amplitude } => {
                let lo = 1.0 - amplitude.abs();
                let hi = 1.0 + amplitude.abs();
                lo.min(1.0 / hi)
            }
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, MetricTensor::Identity)
    }

    /// Evaluate g, g^-1 and sqrt(det g) at a position.
    pub fn eval(&self, x: f64, y: f64) -> MetricData {
        let g = match self {
            MetricTensor::Identity => [[1.0, 0.0], [0.0, 1.0]],
            MetricTensor::Constant { g, .. } => *g,
            MetricTensor::SineConformal { amplitude } => {
                let c = 1.0 + amplitude * x.sin();
                let _ = y;
                [[c, 0.0], [0.0, c]]
            }
        };
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let inv = [
            [g[1][1] / det, -g[0][1] / det],
            [-g[1][0] / det, g[0][0] / det],
        ];
        MetricData {
            g,
            g_inv: inv,
            sqrt_det: det.sqrt(),
        }
    }

    /// Spot-check symmetry and ellipticity on a grid of sample points.
    /// Reports the offending position and eigenvalue on failure.
    pub fn validate(&self, samples: &[(f64, f64)]) -> Result<()> {
        let theta = self.theta();
        for &(x, y) in samples {
            let m = self.eval(x, y);
            if (m.g[0][1] - m.g[1][0]).abs() > 1e-12 {
                return Err(Error::Metric(format!(
                    "asymmetric at ({x}, {y}): g01 = {}, g10 = {}",
                    m.g[0][1], m.g[1][0]
                )));
            }
            let (lo, _) = sym_eigenvalues(&m.g);
            if lo < theta * (1.0 - 1e-12) {
                return Err(Error::Metric(format!(
                    "ellipticity violated at ({x}, {y}): eigenvalue {lo:.6e} < theta {theta:.6e}"
                )));
            }
        }
        Ok(())
    }
}

/// Conormal direction nu_g for a Euclidean unit normal nu at a point,
/// together with the normalization sqrt(g^lm nu_l nu_m).
pub fn conormal(metric: &MetricData, nu: [f64; 2]) -> [f64; 2] {
    let gi = &metric.g_inv;
    let v = [
        gi[0][0] * nu[0] + gi[0][1] * nu[1],
        gi[1][0] * nu[0] + gi[1][1] * nu[1],
    ];
    let s = (nu[0] * v[0] + nu[1] * v[1]).sqrt();
    [v[0] / s, v[1] / s]
}

/// g-inner product of two vectors at a point.
pub fn g_inner(metric: &MetricData, a: [f64; 2], b: [f64; 2]) -> f64 {
    let g = &metric.g;
    a[0] * (g[0][0] * b[0] + g[0][1] * b[1]) + a[1] * (g[1][0] * b[0] + g[1][1] * b[1])
}

/// Length element factor sqrt(t^T g t) for a unit Euclidean tangent t.
pub fn line_element(metric: &MetricData, t: [f64; 2]) -> f64 {
    g_inner(metric, t, t).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_eval() {
        let m = MetricTensor::Identity.eval(0.3, -1.2);
        assert_eq!(m.g, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(m.sqrt_det, 1.0);
    }

    #[test]
    fn constant_diag_eval() {
        let g = MetricTensor::constant([[4.0, 0.0], [0.0, 1.0]]).unwrap();
        let m = g.eval(0.0, 0.0);
        assert_relative_eq!(m.sqrt_det, 2.0, max_relative = 1e-15);
        assert_relative_eq!(m.g_inv[0][0], 0.25, max_relative = 1e-15);
        assert_relative_eq!(m.g_inv[1][1], 1.0, max_relative = 1e-15);
        assert_relative_eq!(g.theta(), 0.25, max_relative = 1e-15);
    }

    #[test]
    fn sine_conformal_eval() {
        let g = MetricTensor::sine_conformal(0.1).unwrap();
        let m = g.eval(std::f64::consts::FRAC_PI_2, 3.0);
        assert_relative_eq!(m.sqrt_det, 1.1, max_relative = 1e-14);
        assert_relative_eq!(m.g[0][0], 1.1, max_relative = 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        assert!(MetricTensor::constant([[1.0, 0.5], [0.2, 1.0]]).is_err());
        assert!(MetricTensor::constant([[1.0, 3.0], [3.0, 1.0]]).is_err());
        assert!(MetricTensor::sine_conformal(1.0).is_err());
    }

    #[test]
    fn conormal_reduces_to_nu_for_identity() {
        let m = MetricTensor::Identity.eval(1.0, 0.0);
        let nu = [-1.0, 0.0];
        assert_eq!(conormal(&m, nu), nu);
    }

    #[test]
    fn conormal_unit_in_g_and_positive_against_nu() {
        let g = MetricTensor::constant([[2.0, 0.3], [0.3, 1.0]]).unwrap();
        let m = g.eval(0.0, 0.0);
        let nu = [0.6, -0.8];
        let ng = conormal(&m, nu);
        assert_relative_eq!(g_inner(&m, ng, ng), 1.0, max_relative = 1e-14);
        assert!(g_inner(&m, ng, nu) > 0.0);
    }

    #[test]
    fn conormal_direction_invariant_under_scaling() {
        // g -> c g rescales nu_g by 1/sqrt(c) but keeps the direction.
        let g1 = MetricTensor::constant([[2.0, 0.3], [0.3, 1.0]]).unwrap();
        let g5 = MetricTensor::constant([[10.0, 1.5], [1.5, 5.0]]).unwrap();
        let nu = [0.6, -0.8];
        let a = conormal(&g1.eval(0.0, 0.0), nu);
        let b = conormal(&g5.eval(0.0, 0.0), nu);
        let cross = a[0] * b[1] - a[1] * b[0];
        assert!(cross.abs() < 1e-14);
        assert_relative_eq!(b[0] * 5.0_f64.sqrt(), a[0], max_relative = 1e-12);
    }
}
