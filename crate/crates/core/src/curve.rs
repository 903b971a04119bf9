//! Star-shaped boundary curves and the annular domain between them.
//!
//! Both boundary components are parametrized over the same angle:
//! point(theta) = center + rho(theta) (cos theta, sin theta) with rho > 0.
//! Star shape about a common center guarantees the curves are simple and
//! lets the mesh blend radially between them.

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Radius function of a star-shaped closed curve.
#[derive(Debug, Clone, PartialEq)]
pub enum StarCurve {
    Circle { radius: f64 },
    /// rho(theta) = base + sum_k cos_k cos((k+1) theta) + sin_k sin((k+1) theta)
    Harmonics {
        base: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
}

impl StarCurve {
    pub fn circle(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Geometry(format!("circle radius must be positive, got {radius}")));
        }
        Ok(StarCurve::Circle { radius })
    }

    pub fn harmonics(base: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        let c = StarCurve::Harmonics { base, cos, sin };
        // Positivity is cheap to certify: base minus the coefficient mass
        // lower-bounds rho; fall back to dense sampling when that is negative.
        let min = c.min_radius_estimate();
        if !(min > 0.0) {
            return Err(Error::Geometry(format!(
                "star curve radius is not positive (min over samples {min:.6e})"
            )));
        }
        Ok(c)
    }

    pub fn radius(&self, theta: f64) -> f64 {
        match self {
            StarCurve::Circle { radius } => *radius,
            StarCurve::Harmonics { base, cos, sin } => {
                let mut r = *base;
                for (k, c) in cos.iter().enumerate() {
                    r += c * (((k + 1) as f64) * theta).cos();
                }
                for (k, s) in sin.iter().enumerate() {
                    r += s * (((k + 1) as f64) * theta).sin();
                }
                r
            }
        }
    }

    pub fn point(&self, theta: f64) -> [f64; 2] {
        let r = self.radius(theta);
        [r * theta.cos(), r * theta.sin()]
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, StarCurve::Circle { .. })
    }

    fn min_radius_estimate(&self) -> f64 {
        match self {
            StarCurve::Circle { radius } => *radius,
            StarCurve::Harmonics { .. } => (0..4096)
                .map(|j| self.radius(TWO_PI * j as f64 / 4096.0))
                .fold(f64::INFINITY, f64::min),
        }
    }
}

/// The annulus-like domain D between an inner curve S and an outer curve
/// Gamma, star-shaped about the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnularDomain {
    pub inner: StarCurve,
    pub outer: StarCurve,
    /// Minimal admissible gap between the curves, checked on construction.
    pub containment_margin: f64,
}

impl AnnularDomain {
    pub fn new(inner: StarCurve, outer: StarCurve, containment_margin: f64) -> Result<Self> {
        if !(containment_margin > 0.0) {
            return Err(Error::Geometry(format!(
                "containment margin must be positive, got {containment_margin}"
            )));
        }
        let gap = (0..4096)
            .map(|j| {
                let t = TWO_PI * j as f64 / 4096.0;
                outer.radius(t) - inner.radius(t)
            })
            .fold(f64::INFINITY, f64::min);
        if gap < containment_margin {
            return Err(Error::Geometry(format!(
                "outer curve does not contain the inner one with margin {containment_margin}: min gap {gap:.6e}"
            )));
        }
        Ok(AnnularDomain {
            inner,
            outer,
            containment_margin,
        })
    }

    /// Concentric circles, the workhorse geometry of the experiments.
    pub fn circles(r_inner: f64, r_outer: f64) -> Result<Self> {
        let margin = 0.1 * (r_outer - r_inner);
        if !(margin > 0.0) {
            return Err(Error::Geometry(format!(
                "need r_inner < r_outer, got {r_inner} and {r_outer}"
            )));
        }
        AnnularDomain::new(StarCurve::circle(r_inner)?, StarCurve::circle(r_outer)?, margin)
    }

    pub fn is_circular(&self) -> bool {
        self.inner.is_circle() && self.outer.is_circle()
    }

    /// (R0, R1) when both curves are circles.
    pub fn radii(&self) -> Option<(f64, f64)> {
        match (&self.inner, &self.outer) {
            (StarCurve::Circle { radius: r0 }, StarCurve::Circle { radius: r1 }) => {
                Some((*r0, *r1))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_points() {
        let c = StarCurve::circle(2.0).unwrap();
        let p = c.point(std::f64::consts::FRAC_PI_2);
        assert!((p[0]).abs() < 1e-15);
        assert!((p[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn harmonics_radius() {
        let c = StarCurve::harmonics(1.0, vec![0.0, 0.2], vec![]).unwrap();
        assert!((c.radius(0.0) - 1.2).abs() < 1e-15);
        assert!((c.radius(std::f64::consts::FRAC_PI_2) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_radius() {
        assert!(StarCurve::circle(0.0).is_err());
        assert!(StarCurve::harmonics(0.5, vec![0.7], vec![]).is_err());
    }

    #[test]
    fn domain_containment() {
        assert!(AnnularDomain::circles(1.0, 2.0).is_ok());
        assert!(AnnularDomain::circles(1.0, 1.0).is_err());
        // Wavy inner curve poking through the outer circle.
        let inner = StarCurve::harmonics(1.8, vec![0.5], vec![]).unwrap();
        let outer = StarCurve::circle(2.0).unwrap();
        assert!(AnnularDomain::new(inner, outer, 0.05).is_err());
    }
}
