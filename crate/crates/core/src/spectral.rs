//! Separation-of-variables forward solver on concentric circles.
//!
//! For the Euclidean metric, f = 0 and constant Robin coefficients the
//! problem decouples over Fourier modes on the annulus R0 < r < R1:
//!
//! ```text
//!   u_n(r, theta) = (a r^n + b r^-n) {cos, sin}(n theta),   n >= 1,
//!   u_0(r)        =  a + b ln r,
//! ```
//!
//! and each mode satisfies a 2x2 system from the Robin conditions
//!
//! ```text
//!   -u'(R0) + q_S u(R0) = flux_S coefficient      (outward normal -e_r),
//!    u'(R1) + q_G u(R1) = flux_Gamma coefficient  (outward normal +e_r).
//! ```
//!
//! This backend is exact up to rounding, which makes it the reference both
//! for the finite element solver and for the singular-value decay
//! experiments: a unit L^2(S) flux in mode n produces Gamma data of size
//! ~ (R0 / R1)^n, so -ln sigma(n) / n approaches ln(R1 / R0).

use crate::curve::TWO_PI;
use crate::error::{Error, Result};

/// Truncation cap for mode solves; keeps r^n within f64 range with margin.
pub const MAX_MODE: usize = 256;

/// Truncated Fourier series a0 + sum_k cos[k] cos((k+1) t) + sin[k] sin((k+1) t).
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries {
    pub a0: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl FourierSeries {
    pub fn zero() -> Self {
        FourierSeries {
            a0: 0.0,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    pub fn constant(a0: f64) -> Self {
        FourierSeries {
            a0,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    /// Single mode c * {cos, sin}(n theta).
    pub fn mode(n: usize, kind: ModeKind, c: f64) -> Self {
        let mut s = FourierSeries::zero();
        if n == 0 {
            s.a0 = c;
            return s;
        }
        match kind {
            ModeKind::Cos => {
                s.cos = vec![0.0; n];
                s.cos[n - 1] = c;
            }
            ModeKind::Sin => {
                s.sin = vec![0.0; n];
                s.sin[n - 1] = c;
            }
        }
        s
    }

    /// Highest mode order present.
    pub fn order(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    pub fn coef(&self, n: usize, kind: ModeKind) -> f64 {
        if n == 0 {
            return self.a0;
        }
        let v = match kind {
            ModeKind::Cos => &self.cos,
            ModeKind::Sin => &self.sin,
        };
        v.get(n - 1).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut v = self.a0;
        for (k, c) in self.cos.iter().enumerate() {
            v += c * (((k + 1) as f64) * theta).cos();
        }
        for (k, s) in self.sin.iter().enumerate() {
            v += s * (((k + 1) as f64) * theta).sin();
        }
        v
    }

    pub fn sample(&self, angles: &[f64]) -> Vec<f64> {
        angles.iter().map(|&t| self.eval(t)).collect()
    }

    /// Derivative with respect to the angle.
    pub fn d_dtheta(&self) -> FourierSeries {
        let order = self.order();
        let mut cos = vec![0.0; order];
        let mut sin = vec![0.0; order];
        for (k, c) in self.cos.iter().enumerate() {
            sin[k] = -c * (k + 1) as f64; // d/dt cos(nt) = -n sin(nt)
        }
        for (k, s) in self.sin.iter().enumerate() {
            cos[k] += s * (k + 1) as f64;
        }
        FourierSeries { a0: 0.0, cos, sin }
    }

    /// L^2 norm on a circle of the given radius.
    pub fn l2_norm_on_circle(&self, radius: f64) -> f64 {
        let mut sq = TWO_PI * radius * self.a0 * self.a0;
        let pr = std::f64::consts::PI * radius;
        for c in &self.cos {
            sq += pr * c * c;
        }
        for s in &self.sin {
            sq += pr * s * s;
        }
        sq.sqrt()
    }

    /// Project weighted nodal samples onto modes 0..=n_max.  Exact (up to
    /// rounding) for band-limited data on uniform circle grids below the
    /// Nyquist order.
    pub fn from_samples(values: &[f64], angles: &[f64], weights: &[f64], n_max: usize) -> Self {
        let total: f64 = weights.iter().sum();
        let mut s = FourierSeries {
            a0: 0.0,
            cos: vec![0.0; n_max],
            sin: vec![0.0; n_max],
        };
        for i in 0..values.len() {
            s.a0 += weights[i] * values[i];
        }
        s.a0 /= total;
        for n in 1..=n_max {
            let (mut pc, mut ps) = (0.0, 0.0);
            for i in 0..values.len() {
                let arg = n as f64 * angles[i];
                pc += weights[i] * values[i] * arg.cos();
                ps += weights[i] * values[i] * arg.sin();
            }
            s.cos[n - 1] = 2.0 * pc / total;
            s.sin[n - 1] = 2.0 * ps / total;
        }
        s
    }

    pub fn scaled(&self, c: f64) -> FourierSeries {
        FourierSeries {
            a0: c * self.a0,
            cos: self.cos.iter().map(|v| c * v).collect(),
            sin: self.sin.iter().map(|v| c * v).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    Cos,
    Sin,
}

impl ModeKind {
    pub fn label(self) -> &'static str {
        match self {
            ModeKind::Cos => "c",
            ModeKind::Sin => "s",
        }
    }
}

/// Constant-coefficient Robin problem on the circular annulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleProblem {
    pub r0: f64,
    pub r1: f64,
    pub q_s: f64,
    pub q_gamma: f64,
}

impl CircleProblem {
    pub fn new(r0: f64, r1: f64, q_s: f64, q_gamma: f64) -> Result<Self> {
        if !(r0 > 0.0 && r1 > r0) {
            return Err(Error::Geometry(format!("need 0 < r0 < r1, got {r0}, {r1}")));
        }
        if q_s < 0.0 || q_gamma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "Robin coefficients must be nonnegative, got q_s = {q_s}, q_gamma = {q_gamma}"
            )));
        }
        if q_s + q_gamma == 0.0 {
            return Err(Error::Coercivity(
                "q vanishes on both boundary circles and there is no absorption".into(),
            ));
        }
        Ok(CircleProblem { r0, r1, q_s, q_gamma })
    }

    /// Coefficients (a, b) of the single mode n: u = a r^n + b r^-n for
    /// n >= 1 and u = a + b ln r for n = 0, driven by the flux coefficients
    /// on S and Gamma.
    pub fn solve_mode(&self, n: usize, flux_s: f64, flux_gamma: f64) -> Result<(f64, f64)> {
        if n > MAX_MODE {
            return Err(Error::InvalidArgument(format!(
                "mode order {n} exceeds the supported cap {MAX_MODE}"
            )));
        }
        let (r0, r1) = (self.r0, self.r1);
        let (m00, m01, m10, m11);
        if n == 0 {
            // rows: S then Gamma; columns: (a, b)
            m00 = self.q_s;
            m01 = -1.0 / r0 + self.q_s * r0.ln();
            m10 = self.q_gamma;
            m11 = 1.0 / r1 + self.q_gamma * r1.ln();
        } else {
            let nf = n as f64;
            m00 = -nf * r0.powi(n as i32 - 1) + self.q_s * r0.powi(n as i32);
            m01 = nf * r0.powi(-(n as i32) - 1) + self.q_s * r0.powi(-(n as i32));
            m10 = nf * r1.powi(n as i32 - 1) + self.q_gamma * r1.powi(n as i32);
            m11 = -nf * r1.powi(-(n as i32) - 1) + self.q_gamma * r1.powi(-(n as i32));
        }
        let det = m00 * m11 - m01 * m10;
        let scale = m00.abs().max(m01.abs()).max(m10.abs()).max(m11.abs());
        if det.abs() <= 1e-14 * scale * scale {
            return Err(Error::InvalidArgument(format!(
                "mode {n} system is singular (det {det:.3e})"
            )));
        }
        Ok(((flux_s * m11 - flux_gamma * m01) / det, (m00 * flux_gamma - m10 * flux_s) / det))
    }
}

/// Mode-wise solution of the circle problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSolution {
    pub problem: CircleProblem,
    pub flux_s: FourierSeries,
    pub flux_gamma: FourierSeries,
    /// (a, b) of the angular average: u = a + b ln r.
    pub zero: (f64, f64),
    /// (a, b) per cos mode, index k for order k + 1.
    pub cos: Vec<(f64, f64)>,
    pub sin: Vec<(f64, f64)>,
}

/// Solve the circle problem for truncated Fourier fluxes on both boundaries.
pub fn spectral_forward(
    problem: &CircleProblem,
    flux_s: &FourierSeries,
    flux_gamma: &FourierSeries,
) -> Result<SpectralSolution> {
    let order = flux_s.order().max(flux_gamma.order());
    let zero = problem.solve_mode(0, flux_s.a0, flux_gamma.a0)?;
    let mut cos = Vec::with_capacity(order);
    let mut sin = Vec::with_capacity(order);
    for n in 1..=order {
        cos.push(problem.solve_mode(
            n,
            flux_s.coef(n, ModeKind::Cos),
            flux_gamma.coef(n, ModeKind::Cos),
        )?);
        sin.push(problem.solve_mode(
            n,
            flux_s.coef(n, ModeKind::Sin),
            flux_gamma.coef(n, ModeKind::Sin),
        )?);
    }
    Ok(SpectralSolution {
        problem: *problem,
        flux_s: flux_s.clone(),
        flux_gamma: flux_gamma.clone(),
        zero,
        cos,
        sin,
    })
}

impl SpectralSolution {
    pub fn order(&self) -> usize {
        self.cos.len()
    }

    /// Point value inside the closed annulus.
    pub fn field(&self, r: f64, theta: f64) -> Result<f64> {
        let eps = 1e-12 * self.problem.r1;
        if r < self.problem.r0 - eps || r > self.problem.r1 + eps {
            return Err(Error::InvalidArgument(format!(
                "radius {r} outside [{}, {}]",
                self.problem.r0, self.problem.r1
            )));
        }
        let mut v = self.zero.0 + self.zero.1 * r.ln();
        for (k, &(a, b)) in self.cos.iter().enumerate() {
            let n = (k + 1) as i32;
            v += (a * r.powi(n) + b * r.powi(-n)) * (n as f64 * theta).cos();
        }
        for (k, &(a, b)) in self.sin.iter().enumerate() {
            let n = (k + 1) as i32;
            v += (a * r.powi(n) + b * r.powi(-n)) * (n as f64 * theta).sin();
        }
        Ok(v)
    }

    /// Cartesian gradient at an interior point.
    pub fn gradient(&self, r: f64, theta: f64) -> Result<[f64; 2]> {
        let eps = 1e-12 * self.problem.r1;
        if r < self.problem.r0 - eps || r > self.problem.r1 + eps {
            return Err(Error::InvalidArgument(format!(
                "radius {r} outside [{}, {}]",
                self.problem.r0, self.problem.r1
            )));
        }
        let mut ur = self.zero.1 / r;
        let mut ut = 0.0; // (1/r) du/dtheta
        for (k, &(a, b)) in self.cos.iter().enumerate() {
            let n = (k + 1) as i32;
            let nf = n as f64;
            let radial = a * nf * r.powi(n - 1) - b * nf * r.powi(-n - 1);
            let val = a * r.powi(n) + b * r.powi(-n);
            ur += radial * (nf * theta).cos();
            ut += -val * nf * (nf * theta).sin() / r;
        }
        for (k, &(a, b)) in self.sin.iter().enumerate() {
            let n = (k + 1) as i32;
            let nf = n as f64;
            let radial = a * nf * r.powi(n - 1) - b * nf * r.powi(-n - 1);
            let val = a * r.powi(n) + b * r.powi(-n);
            ur += radial * (nf * theta).sin();
            ut += val * nf * (nf * theta).cos() / r;
        }
        let (c, s) = (theta.cos(), theta.sin());
        Ok([ur * c - ut * s, ur * s + ut * c])
    }

    /// Trace series at a radius (typically R0 or R1).
    pub fn trace_series(&self, r: f64) -> FourierSeries {
        let mut out = FourierSeries {
            a0: self.zero.0 + self.zero.1 * r.ln(),
            cos: Vec::with_capacity(self.cos.len()),
            sin: Vec::with_capacity(self.sin.len()),
        };
        for (k, &(a, b)) in self.cos.iter().enumerate() {
            let n = (k + 1) as i32;
            out.cos.push(a * r.powi(n) + b * r.powi(-n));
        }
        for (k, &(a, b)) in self.sin.iter().enumerate() {
            let n = (k + 1) as i32;
            out.sin.push(a * r.powi(n) + b * r.powi(-n));
        }
        out
    }

    /// Radial derivative series at a radius.
    pub fn radial_series(&self, r: f64) -> FourierSeries {
        let mut out = FourierSeries {
            a0: self.zero.1 / r,
            cos: Vec::with_capacity(self.cos.len()),
            sin: Vec::with_capacity(self.sin.len()),
        };
        for (k, &(a, b)) in self.cos.iter().enumerate() {
            let n = (k + 1) as i32;
            let nf = n as f64;
            out.cos.push(a * nf * r.powi(n - 1) - b * nf * r.powi(-n - 1));
        }
        for (k, &(a, b)) in self.sin.iter().enumerate() {
            let n = (k + 1) as i32;
            let nf = n as f64;
            out.sin.push(a * nf * r.powi(n - 1) - b * nf * r.powi(-n - 1));
        }
        out
    }

    /// Conormal derivative on Gamma (outward +e_r): u_r(R1).
    pub fn conormal_gamma(&self) -> FourierSeries {
        self.radial_series(self.problem.r1)
    }

    /// Conormal on Gamma computed from the Robin identity
    /// d_nu u = flux - q * trace; must agree with [`Self::conormal_gamma`].
    pub fn conormal_gamma_via_robin(&self) -> FourierSeries {
        let tr = self.trace_series(self.problem.r1);
        let mut out = self.flux_gamma.clone();
        let order = self.order();
        out.cos.resize(order, 0.0);
        out.sin.resize(order, 0.0);
        out.a0 -= self.problem.q_gamma * tr.a0;
        for k in 0..order {
            out.cos[k] -= self.problem.q_gamma * tr.cos[k];
            out.sin[k] -= self.problem.q_gamma * tr.sin[k];
        }
        out
    }

    /// Largest coefficient discrepancy between the two conormal routes.
    pub fn robin_consistency(&self) -> f64 {
        let a = self.conormal_gamma();
        let b = self.conormal_gamma_via_robin();
        let mut worst = (a.a0 - b.a0).abs();
        for k in 0..self.order() {
            worst = worst.max((a.cos[k] - b.cos[k]).abs());
            worst = worst.max((a.sin[k] - b.sin[k]).abs());
        }
        worst
    }
}

/// Gamma data norm (trace, tangential, conormal stacked in L^2(Gamma))
/// produced by a unit L^2(S) flux in mode n; the decay-law quantity.
pub fn mode_sigma(problem: &CircleProblem, n: usize) -> Result<f64> {
    let (r0, r1) = (problem.r0, problem.r1);
    let amp = if n == 0 {
        1.0 / (TWO_PI * r0).sqrt()
    } else {
        1.0 / (std::f64::consts::PI * r0).sqrt()
    };
    let (a, b) = problem.solve_mode(n, amp, 0.0)?;
    let (trace, radial) = if n == 0 {
        (a + b * r1.ln(), b / r1)
    } else {
        let ni = n as i32;
        (
            a * r1.powi(ni) + b * r1.powi(-ni),
            (n as f64) * (a * r1.powi(ni - 1) - b * r1.powi(-ni - 1)),
        )
    };
    let half = if n == 0 { TWO_PI * r1 } else { std::f64::consts::PI * r1 };
    let tang_sq = if n == 0 {
        0.0
    } else {
        (n as f64 / r1).powi(2) * trace * trace * half
    };
    Ok((half * trace * trace + tang_sq + half * radial * radial).sqrt())
}

/// Fourier coefficient dump rows `n,kind,coef` for a series.
pub fn fourier_rows(series: &FourierSeries) -> Vec<(usize, ModeKind, f64)> {
    let mut rows = vec![(0, ModeKind::Cos, series.a0)];
    for (k, &c) in series.cos.iter().enumerate() {
        rows.push((k + 1, ModeKind::Cos, c));
    }
    for (k, &s) in series.sin.iter().enumerate() {
        rows.push((k + 1, ModeKind::Sin, s));
    }
    rows
}
