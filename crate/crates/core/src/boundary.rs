//! Scalar fields and Sobolev calculus on the two boundary loops.
//!
//! Fields live on loop nodes and carry the induced arclength weights, so
//! discrete `L^2` pairings are trapezoid sums along the curve. Fractional
//! norms `H^t` come from an eigenbasis of the boundary Laplacian: either the
//! finite-difference operator built from the recorded edge lengths, or exact
//! trigonometric modes when the loop is a uniform circle.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryLoop, BoundaryTag};
use crate::spectral::FourierSeries;

/// Nodal values on one boundary loop.
///
/// Angles and weights are copied from the loop so the field stays usable on
/// its own; all pairwise operations check that the node sets agree.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    pub tag: BoundaryTag,
    pub angles: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
}

impl BoundaryField {
    pub fn from_values(lp: &BoundaryLoop, values: Vec<f64>) -> Result<Self> {
        if values.len() != lp.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values but loop {} has {} nodes",
                values.len(),
                lp.tag.label(),
                lp.len()
            )));
        }
        Ok(BoundaryField {
            tag: lp.tag,
            angles: lp.angles.clone(),
            weights: lp.node_weights.clone(),
            values,
        })
    }

    pub fn from_loop_fn(lp: &BoundaryLoop, f: impl Fn(f64) -> f64) -> Self {
        BoundaryField {
            tag: lp.tag,
            angles: lp.angles.clone(),
            weights: lp.node_weights.clone(),
            values: lp.angles.iter().map(|&t| f(t)).collect(),
        }
    }

    pub fn from_series(lp: &BoundaryLoop, series: &FourierSeries) -> Self {
        Self::from_loop_fn(lp, |t| series.eval(t))
    }

    pub fn zeros(lp: &BoundaryLoop) -> Self {
        Self::from_loop_fn(lp, |_| 0.0)
    }

    pub fn constant(lp: &BoundaryLoop, c: f64) -> Self {
        Self::from_loop_fn(lp, |_| c)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.tag != other.tag || self.len() != other.len() {
            return Err(Error::BoundaryMismatch(format!(
                "fields on {}({} nodes) and {}({} nodes) are not defined on the same loop",
                self.tag.label(),
                self.len(),
                other.tag.label(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Weighted inner product along the curve.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .weights
            .iter()
            .zip(&self.values)
            .zip(&other.values)
            .map(|((w, a), b)| w * a * b)
            .sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (v, o) in out.values.iter_mut().zip(&other.values) {
            *v -= o;
        }
        Ok(out)
    }

    pub fn add_scaled(&self, s: f64, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (v, o) in out.values.iter_mut().zip(&other.values) {
            *v += s * o;
        }
        Ok(out)
    }

    /// Periodic linear interpolation onto the nodes of another loop.
    pub fn resample(&self, target: &BoundaryLoop) -> Result<Self> {
        if self.tag != target.tag {
            return Err(Error::BoundaryMismatch(format!(
                "cannot resample a {} field onto loop {}",
                self.tag.label(),
                target.tag.label()
            )));
        }
        let two_pi = std::f64::consts::TAU;
        let n = self.len();
        let values = target
            .angles
            .iter()
            .map(|&t| {
                // Source angles increase along the loop; find the bracketing pair.
                let t = t.rem_euclid(two_pi);
                let mut k = match self
                    .angles
                    .binary_search_by(|a| a.partial_cmp(&t).unwrap())
                {
                    Ok(i) => return self.values[i],
                    Err(i) => i,
                };
                // k is the first node with angle > t; predecessor wraps at 0.
                let (i0, i1, mut a0, a1);
                if k == 0 || k == n {
                    k = 0;
                    i0 = n - 1;
                    i1 = 0;
                    a0 = self.angles[i0] - two_pi;
                    a1 = self.angles[i1];
                    if t >= self.angles[i0] {
                        a0 += two_pi;
                    }
                } else {
                    i0 = k - 1;
                    i1 = k;
                    a0 = self.angles[i0];
                    a1 = self.angles[i1];
                }
                let mut tt = t;
                if tt < a0 {
                    tt += two_pi;
                }
                let den = if k == 0 {
                    self.angles[0] + two_pi - self.angles[n - 1]
                } else {
                    a1 - a0
                };
                let s = (tt - a0) / den;
                self.values[i0] * (1.0 - s) + self.values[i1] * s
            })
            .collect();
        BoundaryField::from_values(target, values)
    }
}

/// Derivative along the curve by centered differences in arclength.
///
/// With trapezoid node weights `w_i = (l_{i-1} + l_i)/2` the centered stencil
/// `(f_{i+1} - f_{i-1}) / (2 w_i)` divides by exactly the arclength between
/// the two neighbours, so on a uniform circle the stencil acts on pure modes
/// with symbol `sin(k h)/h <= k` and never overshoots the continuum rate.
pub fn tangential_gradient(f: &BoundaryField) -> BoundaryField {
    let n = f.len();
    let mut out = f.clone();
    for i in 0..n {
        let prev = f.values[(i + n - 1) % n];
        let next = f.values[(i + 1) % n];
        out.values[i] = (next - prev) / (2.0 * f.weights[i]);
    }
    out
}

/// `||grad_tau f|| / ||f||`, the quantity that decides membership in the
/// constrained flux class.
pub fn in_a_ratio(f: &BoundaryField) -> Result<f64> {
    let denom = f.l2_norm();
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "gradient ratio of the zero field is undefined".into(),
        ));
    }
    Ok(tangential_gradient(f).l2_norm() / denom)
}

/// Discrete eigenpairs of the boundary Laplacian on one loop.
///
/// Modes are stored as columns, orthonormal in the weighted `L^2` pairing,
/// eigenvalues ascending. The sign convention makes the largest entry of
/// each mode positive so bases are reproducible run to run.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub tag: BoundaryTag,
    pub angles: Vec<f64>,
    pub weights: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub modes: DMatrix<f64>,
}

impl EigenBasis {
    /// Finite-difference basis from the recorded edge lengths.
    ///
    /// Solves the periodic Sturm-Liouville problem `A phi = lambda W phi`
    /// with `A` the second-difference operator weighted by inverse edge
    /// lengths and `W` the trapezoid weights, reduced to a symmetric eigen
    /// problem through `W^{-1/2} A W^{-1/2}`.
    pub fn laplace_beltrami(lp: &BoundaryLoop, m_modes: usize) -> Result<Self> {
        let n = lp.len();
        if m_modes == 0 || m_modes > n / 2 {
            return Err(Error::InvalidArgument(format!(
                "requested {m_modes} modes on a loop of {n} nodes; need 1..={}",
                n / 2
            )));
        }
        if lp.edge_lengths.iter().any(|&l| l <= 0.0) || lp.node_weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Geometry(format!(
                "loop {} has no induced lengths; build boundary data first",
                lp.tag.label()
            )));
        }
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let j = (i + 1) % n;
            let c = 1.0 / lp.edge_lengths[i];
            a[(i, i)] += c;
            a[(j, j)] += c;
            a[(i, j)] -= c;
            a[(j, i)] -= c;
        }
        let inv_sqrt_w: Vec<f64> = lp.node_weights.iter().map(|w| 1.0 / w.sqrt()).collect();
        let mut b = a;
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] *= inv_sqrt_w[i] * inv_sqrt_w[j];
            }
        }
        // b picked up rounding asymmetry of order machine epsilon; symmetrize.
        let bt = b.transpose();
        let b = (&b + &bt) * 0.5;
        let eig = b.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

        let mut lambdas = Vec::with_capacity(m_modes);
        let mut modes = DMatrix::<f64>::zeros(n, m_modes);
        for (m, &k) in order.iter().take(m_modes).enumerate() {
            let mut lam = eig.eigenvalues[k];
            if lam < -1e-8 {
                return Err(Error::Coercivity(format!(
                    "boundary Laplacian produced negative eigenvalue {lam:.3e}"
                )));
            }
            if lam < 0.0 {
                lam = 0.0;
            }
            lambdas.push(lam);
            for i in 0..n {
                modes[(i, m)] = eig.eigenvectors[(i, k)] * inv_sqrt_w[i];
            }
            fix_sign(&mut modes, m);
        }
        Ok(EigenBasis {
            tag: lp.tag,
            angles: lp.angles.clone(),
            weights: lp.node_weights.clone(),
            lambdas,
            modes,
        })
    }

    /// Exact trigonometric basis for a uniform circle of the given radius.
    ///
    /// Mode order: constant, then cos/sin pairs of increasing frequency.
    /// Below the Nyquist frequency these are discretely orthonormal in the
    /// trapezoid pairing, with eigenvalues `(k/R)^2`.
    pub fn circle_analytic(
        tag: BoundaryTag,
        radius: f64,
        n_nodes: usize,
        m_modes: usize,
    ) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::Geometry("circle radius must be positive".into()));
        }
        if n_nodes < 8 {
            return Err(Error::InvalidArgument(
                "need at least 8 nodes on a circle".into(),
            ));
        }
        let k_max = m_modes / 2;
        if m_modes == 0 || 2 * k_max >= n_nodes {
            return Err(Error::InvalidArgument(format!(
                "{m_modes} modes exceed the Nyquist limit of {n_nodes} nodes"
            )));
        }
        let two_pi = std::f64::consts::TAU;
        let angles: Vec<f64> = (0..n_nodes).map(|i| two_pi * i as f64 / n_nodes as f64).collect();
        let w = two_pi * radius / n_nodes as f64;
        let weights = vec![w; n_nodes];
        let c_norm = 1.0 / (two_pi * radius).sqrt();
        let t_norm = 1.0 / (std::f64::consts::PI * radius).sqrt();
        let mut lambdas = Vec::with_capacity(m_modes);
        let mut modes = DMatrix::<f64>::zeros(n_nodes, m_modes);
        for m in 0..m_modes {
            let (k, phase_cos) = mode_order(m);
            let lam = (k as f64 / radius).powi(2);
            lambdas.push(lam);
            for (i, &t) in angles.iter().enumerate() {
                modes[(i, m)] = if k == 0 {
                    c_norm
                } else if phase_cos {
                    t_norm * (k as f64 * t).cos()
                } else {
                    t_norm * (k as f64 * t).sin()
                };
            }
        }
        Ok(EigenBasis {
            tag,
            angles,
            weights,
            lambdas,
            modes,
        })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.modes.nrows()
    }

    pub fn lambda_max(&self) -> f64 {
        *self.lambdas.last().unwrap()
    }

    pub fn mode_field(&self, m: usize) -> BoundaryField {
        BoundaryField {
            tag: self.tag,
            angles: self.angles.clone(),
            weights: self.weights.clone(),
            values: self.modes.column(m).iter().copied().collect(),
        }
    }

    fn check_field(&self, f: &BoundaryField) -> Result<()> {
        if f.tag != self.tag || f.len() != self.n_nodes() {
            return Err(Error::BoundaryMismatch(format!(
                "field on {}({} nodes) does not match basis on {}({} nodes)",
                f.tag.label(),
                f.len(),
                self.tag.label(),
                self.n_nodes()
            )));
        }
        Ok(())
    }

    /// Weighted projections `(f, phi_m)` for every mode.
    pub fn coefficients(&self, f: &BoundaryField) -> Result<Vec<f64>> {
        self.check_field(f)?;
        let n = self.n_nodes();
        Ok((0..self.len())
            .map(|m| {
                (0..n)
                    .map(|i| self.weights[i] * f.values[i] * self.modes[(i, m)])
                    .sum()
            })
            .collect())
    }

    pub fn synthesize(&self, coeffs: &[f64]) -> Result<BoundaryField> {
        if coeffs.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a basis of {} modes",
                coeffs.len(),
                self.len()
            )));
        }
        let n = self.n_nodes();
        let values = (0..n)
            .map(|i| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(m, c)| c * self.modes[(i, m)])
                    .sum()
            })
            .collect();
        Ok(BoundaryField {
            tag: self.tag,
            angles: self.angles.clone(),
            weights: self.weights.clone(),
            values,
        })
    }
}

/// Index layout of the analytic circle basis: 0 -> constant, then
/// (cos 1, sin 1, cos 2, sin 2, ...).
fn mode_order(m: usize) -> (usize, bool) {
    if m == 0 {
        (0, true)
    } else {
        ((m + 1) / 2, m % 2 == 1)
    }
}

fn fix_sign(modes: &mut DMatrix<f64>, col: usize) {
    let mut best = 0;
    let mut best_abs = 0.0;
    for i in 0..modes.nrows() {
        let a = modes[(i, col)].abs();
        if a > best_abs {
            best_abs = a;
            best = i;
        }
    }
    if modes[(best, col)] < 0.0 {
        for i in 0..modes.nrows() {
            modes[(i, col)] = -modes[(i, col)];
        }
    }
}

/// Sobolev norm of order `t` in `[0, 1]` through the given eigenbasis:
/// `(sum (1 + lambda_m)^t (f, phi_m)^2)^{1/2}`.
///
/// Content beyond the resolved modes is invisible to this norm, so the basis
/// must be wide enough for the field at hand.
pub fn sobolev_norm(f: &BoundaryField, t: f64, basis: &EigenBasis) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "Sobolev order {t} outside [0, 1]"
        )));
    }
    let coeffs = basis.coefficients(f)?;
    Ok(coeffs
        .iter()
        .zip(&basis.lambdas)
        .map(|(c, lam)| (1.0 + lam).powf(t) * c * c)
        .sum::<f64>()
        .sqrt())
}

/// Orthogonal projection onto the span of modes with `lambda_m <= lambda`.
///
/// Refuses a cutoff beyond the resolved spectrum: the projection could not
/// be distinguished from the identity there.
pub fn project_w(f: &BoundaryField, lambda: f64, basis: &EigenBasis) -> Result<BoundaryField> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("negative eigenvalue cutoff".into()));
    }
    if lambda > basis.lambda_max() * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "cutoff {lambda:.6e} exceeds the resolved spectrum (max {:.6e})",
            basis.lambda_max()
        )));
    }
    let mut coeffs = basis.coefficients(f)?;
    for (c, lam) in coeffs.iter_mut().zip(&basis.lambdas) {
        if *lam > lambda * (1.0 + 1e-12) {
            *c = 0.0;
        }
    }
    basis.synthesize(&coeffs)
}

/// Trace, tangential derivative, and conormal derivative of a field on the
/// outer boundary: everything the measurement functional sees.
#[derive(Debug, Clone)]
pub struct CauchyData {
    pub trace: BoundaryField,
    pub tangential: BoundaryField,
    pub conormal: BoundaryField,
}

impl CauchyData {
    /// Standard route: the tangential part is differentiated from the trace.
    pub fn from_trace_conormal(trace: BoundaryField, conormal: BoundaryField) -> Result<Self> {
        trace.check_compatible(&conormal)?;
        let tangential = tangential_gradient(&trace);
        Ok(CauchyData {
            trace,
            tangential,
            conormal,
        })
    }

    /// Quadratic form of the measurement:
    /// `sqrt(||w||_{H^1}^2 + ||d_nu w||^2)`. This is the norm of
    /// [`CauchyData::stacked`] and what matrix singular values control.
    pub fn data_norm(&self) -> f64 {
        (self.trace.l2_norm().powi(2)
            + self.tangential.l2_norm().powi(2)
            + self.conormal.l2_norm().powi(2))
        .sqrt()
    }

    /// Sum form of the measurement: `||w||_{H^1} + ||d_nu w||`.
    pub fn cauchy_c(&self) -> f64 {
        (self.trace.l2_norm().powi(2) + self.tangential.l2_norm().powi(2)).sqrt()
            + self.conormal.l2_norm()
    }

    /// The three components, each scaled by `sqrt(w_i)`, concatenated.
    /// Euclidean norms of this vector equal [`CauchyData::data_norm`].
    pub fn stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.trace.len());
        for part in [&self.trace, &self.tangential, &self.conormal] {
            out.extend(
                part.weights
                    .iter()
                    .zip(&part.values)
                    .map(|(w, v)| w.sqrt() * v),
            );
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(CauchyData {
            trace: self.trace.sub(&other.trace)?,
            tangential: self.tangential.sub(&other.tangential)?,
            conormal: self.conormal.sub(&other.conormal)?,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        CauchyData {
            trace: self.trace.scale(s),
            tangential: self.tangential.scale(s),
            conormal: self.conormal.scale(s),
        }
    }

    /// Move the measurement onto another discretization of the same curve.
    /// Trace and conormal are interpolated; the tangential derivative is
    /// rebuilt on the target nodes rather than interpolated.
    pub fn resample(&self, target: &BoundaryLoop) -> Result<Self> {
        CauchyData::from_trace_conormal(
            self.trace.resample(target)?,
            self.conormal.resample(target)?,
        )
    }
}

/// Cauchy data sampled from angular series, using the exact angular
/// derivative for the tangential part. The local `ds/dtheta` is recovered
/// from the loop weights, so this stays consistent with the discrete norms.
pub fn cauchy_from_series(
    trace: &FourierSeries,
    conormal: &FourierSeries,
    lp: &BoundaryLoop,
) -> Result<CauchyData> {
    let n = lp.len();
    if n == 0 {
        return Err(Error::Geometry("empty boundary loop".into()));
    }
    let two_pi = std::f64::consts::TAU;
    let d_trace = trace.d_dtheta();
    let mut tangential = Vec::with_capacity(n);
    for i in 0..n {
        let prev = lp.angles[(i + n - 1) % n];
        let next = lp.angles[(i + 1) % n];
        let gap = (next - prev).rem_euclid(two_pi) * 0.5;
        let ds_dtheta = lp.node_weights[i] / gap;
        tangential.push(d_trace.eval(lp.angles[i]) / ds_dtheta);
    }
    Ok(CauchyData {
        trace: BoundaryField::from_series(lp, trace),
        tangential: BoundaryField::from_values(lp, tangential)?,
        conormal: BoundaryField::from_series(lp, conormal),
    })
}

/// Outcome of the multiplier probe: how much a fixed coefficient can grow
/// the fractional norm of band-limited factors.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub ratio_sup: f64,
    /// Largest relative part of a product that fell outside the basis.
    pub leak_max: f64,
    pub modes_used: usize,
    pub trials: usize,
}

/// Empirical sup of `||q u||_{H^{1/2}} / ||u||_{H^{1/2}}` over the pure
/// basis modes below the cutoff plus seeded random combinations of them.
///
/// The basis must be wide enough to hold the products; the residual that
/// leaks past it is reported rather than silently dropped.
pub fn multiplication_probe(
    q: &BoundaryField,
    basis: &EigenBasis,
    lambda_band: f64,
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    basis.check_field(q)?;
    let band: Vec<usize> = (0..basis.len())
        .filter(|&m| basis.lambdas[m] <= lambda_band * (1.0 + 1e-12))
        .collect();
    if band.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no basis mode below cutoff {lambda_band:.3e}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratio_sup: f64 = 0.0;
    let mut leak_max: f64 = 0.0;
    let mut consider = |u: &BoundaryField| -> Result<()> {
        let mut qu = u.clone();
        for (v, qv) in qu.values.iter_mut().zip(&q.values) {
            *v *= qv;
        }
        let denom = sobolev_norm(u, 0.5, basis)?;
        if denom == 0.0 {
            return Ok(());
        }
        let num = sobolev_norm(&qu, 0.5, basis)?;
        ratio_sup = ratio_sup.max(num / denom);
        let back = basis.synthesize(&basis.coefficients(&qu)?)?;
        let qu_norm = qu.l2_norm();
        if qu_norm > 0.0 {
            leak_max = leak_max.max(qu.sub(&back)?.l2_norm() / qu_norm);
        }
        Ok(())
    };
    for &m in &band {
        consider(&basis.mode_field(m))?;
    }
    for _ in 0..trials {
        let mut coeffs = vec![0.0; basis.len()];
        for &m in &band {
            coeffs[m] = rng.sample::<f64, _>(StandardNormal);
        }
        consider(&basis.synthesize(&coeffs)?)?;
    }
    Ok(ProbeReport {
        ratio_sup,
        leak_max,
        modes_used: band.len(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryLoop, BoundaryTag};
    use approx::assert_relative_eq;

    const PI: f64 = std::f64::consts::PI;

    fn unit_circle_basis(n: usize, m: usize) -> EigenBasis {
        EigenBasis::circle_analytic(BoundaryTag::S, 1.0, n, m).unwrap()
    }

    #[test]
    fn parseval_norms_on_unit_circle() {
        let basis = unit_circle_basis(256, 65);
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, 256);
        let f = BoundaryField::from_loop_fn(&lp, |t| (3.0 * t).cos());
        // ||cos 3t||_{L2} = sqrt(pi), ||cos 3t||_{H1} = sqrt(10 pi).
        assert_relative_eq!(sobolev_norm(&f, 0.0, &basis).unwrap(), PI.sqrt(), epsilon = 1e-10);
        assert_relative_eq!(
            sobolev_norm(&f, 1.0, &basis).unwrap(),
            (10.0 * PI).sqrt(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn fd_eigenvalues_approach_circle_spectrum() {
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::S, 2.0, 200);
        let basis = EigenBasis::laplace_beltrami(&lp, 17).unwrap();
        assert!(basis.lambdas[0].abs() < 1e-10);
        for m in 1..17 {
            let k = ((m + 1) / 2) as f64;
            let exact = (k / 2.0).powi(2);
            let got = basis.lambdas[m];
            assert!(got <= exact + 1e-10, "mode {m}: {got} above {exact}");
            assert!((got - exact).abs() / exact < 1e-2, "mode {m}: {got} vs {exact}");
        }
    }

    #[test]
    fn bases_are_weighted_orthonormal() {
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::Gamma, 1.7, 64);
        for basis in [
            EigenBasis::laplace_beltrami(&lp, 32).unwrap(),
            EigenBasis::circle_analytic(BoundaryTag::Gamma, 1.7, 64, 31).unwrap(),
        ] {
            for a in 0..basis.len() {
                for b in 0..basis.len() {
                    let dot = basis
                        .mode_field(a)
                        .inner(&basis.mode_field(b))
                        .unwrap();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10, "modes {a},{b}: {dot}");
                }
            }
        }
    }

    #[test]
    fn band_limited_round_trip() {
        let basis = unit_circle_basis(64, 21);
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, 64);
        let f = BoundaryField::from_loop_fn(&lp, |t| {
            0.3 + (2.0 * t).cos() - 0.25 * (5.0 * t).sin()
        });
        let back = basis.synthesize(&basis.coefficients(&f).unwrap()).unwrap();
        for (a, b) in f.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolation_inequality_and_monotonicity() {
        let basis = unit_circle_basis(128, 41);
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, 128);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let coeffs: Vec<f64> = (0..41).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let f = basis.synthesize(&coeffs).unwrap();
            let n0 = sobolev_norm(&f, 0.0, &basis).unwrap();
            let nh = sobolev_norm(&f, 0.5, &basis).unwrap();
            let n1 = sobolev_norm(&f, 1.0, &basis).unwrap();
            assert!(n0 <= nh && nh <= n1);
            assert!(nh * nh <= n0 * n1 * (1.0 + 1e-12));
        }
        drop(lp);
    }

    #[test]
    fn band_limited_fields_satisfy_gradient_bound() {
        let basis = EigenBasis::circle_analytic(BoundaryTag::S, 2.0, 128, 41).unwrap();
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::S, 2.0, 128);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &lambda in &[1.0, 4.0, 9.0] {
            for _ in 0..20 {
                let coeffs: Vec<f64> = (0..41).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let f = project_w(&basis.synthesize(&coeffs).unwrap(), lambda, &basis).unwrap();
                let ratio = in_a_ratio(&f).unwrap();
                assert!(
                    ratio <= lambda.sqrt() + 1e-8,
                    "ratio {ratio} above sqrt({lambda})"
                );
            }
        }
        drop(lp);
    }

    #[test]
    fn projection_keeps_only_low_modes() {
        let basis = unit_circle_basis(64, 21);
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, 64);
        let f = BoundaryField::from_loop_fn(&lp, |t| (2.0 * t).cos() + (7.0 * t).cos());
        let p = project_w(&f, 10.0, &basis).unwrap();
        for (i, &t) in lp.angles.iter().enumerate() {
            assert!((p.values[i] - (2.0 * t).cos()).abs() < 1e-12);
        }
        assert!(matches!(
            project_w(&f, 200.0, &basis),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn constant_trace_measurement_is_sqrt_area_of_circle() {
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::Gamma, 2.0, 128);
        let trace = BoundaryField::constant(&lp, 1.0);
        let conormal = BoundaryField::zeros(&lp);
        let cauchy = CauchyData::from_trace_conormal(trace, conormal).unwrap();
        // ||1||_{L2} on a circle of radius 2 is sqrt(4 pi); no other term.
        assert_relative_eq!(cauchy.data_norm(), (4.0 * PI).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(cauchy.cauchy_c(), (4.0 * PI).sqrt(), epsilon = 1e-12);
        let stacked = cauchy.stacked();
        let norm: f64 = stacked.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_relative_eq!(norm, cauchy.data_norm(), epsilon = 1e-12);
    }

    #[test]
    fn tangential_gradient_has_exact_discrete_symbol() {
        let n = 128;
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::Gamma, 1.0, n);
        let h = std::f64::consts::TAU / n as f64;
        let f = BoundaryField::from_loop_fn(&lp, |t| (3.0 * t).cos());
        let g = tangential_gradient(&f);
        let symbol = (3.0 * h).sin() / h;
        for (i, &t) in lp.angles.iter().enumerate() {
            assert!((g.values[i] + symbol * (3.0 * t).sin()).abs() < 1e-12);
        }
        assert!(symbol < 3.0);
    }

    #[test]
    fn series_cauchy_matches_analytic_derivative() {
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::Gamma, 2.0, 96);
        let trace = FourierSeries::mode(2, crate::spectral::ModeKind::Sin, 1.5);
        let conormal = FourierSeries::constant(0.25);
        let data = cauchy_from_series(&trace, &conormal, &lp).unwrap();
        for (i, &t) in lp.angles.iter().enumerate() {
            // d/ds of 1.5 sin(2 theta) on radius 2 is 1.5 cos(2 theta) * 2/2.
            assert_relative_eq!(
                data.tangential.values[i],
                1.5 * (2.0 * t).cos(),
                epsilon = 1e-12
            );
            assert_relative_eq!(data.conormal.values[i], 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn unit_coefficient_probe_is_exactly_one() {
        let basis = EigenBasis::circle_analytic(BoundaryTag::S, 2.0, 128, 33).unwrap();
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::S, 2.0, 128);
        let q = BoundaryField::constant(&lp, 1.0);
        let report = multiplication_probe(&q, &basis, 16.0, 5, 7).unwrap();
        assert_relative_eq!(report.ratio_sup, 1.0, epsilon = 1e-12);
        assert!(report.leak_max < 1e-12);
    }

    #[test]
    fn resample_recovers_smooth_fields() {
        let coarse = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, 32);
        let fine = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, 100);
        let f = BoundaryField::from_loop_fn(&coarse, |t| t.cos());
        let r = f.resample(&fine).unwrap();
        for (i, &t) in fine.angles.iter().enumerate() {
            assert!((r.values[i] - t.cos()).abs() < 6e-3);
        }
        // Same loop: resampling is the identity.
        let same = f.resample(&coarse).unwrap();
        assert_eq!(same.values, f.values);
    }

    #[test]
    fn zero_field_ratio_is_rejected() {
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, 32);
        let z = BoundaryField::zeros(&lp);
        assert!(in_a_ratio(&z).is_err());
    }
}
