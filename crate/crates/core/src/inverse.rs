//! Reconstruction: the linear inverse flux problem on a band-limited
//! subspace, and the fixed-point solver for the Robin coefficient on the
//! inner boundary.
//!
//! The linear map sends a flux on S (zero flux on Gamma) to its Cauchy data
//! on Gamma, discretized column by column over an eigenbasis of the inner
//! boundary. The coefficient solver wraps that map: the difference of two
//! forward solutions with coefficients q1, q2 and identical data solves a
//! homogeneous problem with effective flux b = (q2 - q1) u2 on S, so each
//! iteration recovers b from the data mismatch and divides by the current
//! trace, which stays strictly positive for admissible data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::boundary::{BoundaryField, CauchyData, EigenBasis};
use crate::curve::AnnularDomain;
use crate::error::{Error, Result};
use crate::fem::{assemble, extract_cauchy, flux_load, solve_forward, RobinProblem, SourceTerm};
use crate::mesh::{BoundaryLoop, BoundaryTag, Mesh};
use crate::metric::MetricTensor;
use crate::solver::SystemSolver;
use crate::spectral::{spectral_forward, CircleProblem, FourierSeries, ModeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapBackend {
    Spectral,
    Fem,
}

/// Which norm the flux space carries. The data side always carries the
/// measurement norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormConvention {
    L2,
    HHalf,
    H1,
}

impl NormConvention {
    pub fn exponent(self) -> f64 {
        match self {
            NormConvention::L2 => 0.0,
            NormConvention::HHalf => 0.5,
            NormConvention::H1 => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NormConvention::L2 => "L2",
            NormConvention::HHalf => "H1/2",
            NormConvention::H1 => "H1",
        }
    }
}

/// Discretized flux-to-data map. `raw` holds the unweighted stacked Cauchy
/// image of each basis mode; weighting by `(1 + lambda_m)^{-t/2}` turns
/// coefficient vectors measured in `H^t(S)` into data vectors, so the
/// singular values of the weighted matrix are the stability constants of
/// the chosen convention.
#[derive(Debug, Clone)]
pub struct ForwardMapMatrix {
    pub backend: MapBackend,
    pub norm_convention: NormConvention,
    pub lambda: f64,
    pub basis: EigenBasis,
    pub raw: DMatrix<f64>,
}

impl ForwardMapMatrix {
    pub fn n_columns(&self) -> usize {
        self.raw.ncols()
    }

    /// Column weighting for an arbitrary convention.
    pub fn weighted(&self, convention: NormConvention) -> DMatrix<f64> {
        let t = convention.exponent();
        let mut m = self.raw.clone();
        for (j, lam) in self.basis.lambdas.iter().enumerate() {
            let s = (1.0 + lam).powf(-0.5 * t);
            for i in 0..m.nrows() {
                m[(i, j)] *= s;
            }
        }
        m
    }

    fn singular_values(&self, convention: NormConvention) -> Vec<f64> {
        let svd = self.weighted(convention).svd(false, false);
        let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    }

    /// Smallest singular value under the map's own convention.
    pub fn sigma_min(&self) -> f64 {
        *self
            .singular_values(self.norm_convention)
            .last()
            .unwrap()
    }

    pub fn cond(&self) -> f64 {
        let s = self.singular_values(self.norm_convention);
        s[0] / s[s.len() - 1]
    }
}

/// Outcome of either inversion. The linear flux solve fills the scalar
/// fields and leaves the history empty; the coefficient solver appends one
/// record per outer iteration.
#[derive(Debug, Clone)]
pub struct InversionResult {
    pub estimate: BoundaryField,
    /// Data-space mismatch of the estimate, recomputed from the map.
    pub residual: f64,
    /// Smallest singular value of the weighted matrix used in the solve.
    pub sigma_min: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
    /// Nodes whose unclamped update left [0, kappa] in the final iteration.
    pub clamp_contacts: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iter: usize,
    pub mismatch: f64,
    pub update_norm: f64,
    pub min_u_on_s: f64,
}

/// Eigenbasis of the inner boundary truncated at the cutoff. Circular
/// domains get the exact trigonometric modes; anything else falls back to
/// the finite-difference basis of the loop.
fn band_basis(domain: &AnnularDomain, s_loop: &BoundaryLoop, lambda: f64) -> Result<EigenBasis> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("negative eigenvalue cutoff".into()));
    }
    let n = s_loop.len();
    let basis = if let Some((r0, _)) = domain.radii() {
        let k_max = (r0 * lambda.sqrt() * (1.0 + 1e-9)).floor() as usize;
        if 2 * k_max >= n {
            return Err(Error::InvalidArgument(format!(
                "cutoff {lambda:.3e} needs mode {k_max}, beyond the Nyquist limit of {n} nodes"
            )));
        }
        EigenBasis::circle_analytic(BoundaryTag::S, r0, n, 2 * k_max + 1)?
    } else {
        let full = EigenBasis::laplace_beltrami(s_loop, n / 2)?;
        if lambda > full.lambda_max() * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "cutoff {lambda:.3e} exceeds the resolved spectrum {:.3e}",
                full.lambda_max()
            )));
        }
        full
    };
    let keep = basis
        .lambdas
        .iter()
        .take_while(|&&l| l <= lambda * (1.0 + 1e-12))
        .count();
    Ok(EigenBasis {
        tag: basis.tag,
        angles: basis.angles,
        weights: basis.weights,
        lambdas: basis.lambdas[..keep].to_vec(),
        modes: basis.modes.columns(0, keep).into_owned(),
    })
}

/// Spectral assembly on concentric circles with constant coefficients.
/// Works from synthetic loops; no mesh is required.
pub fn assemble_forward_map_spectral(
    lambda: f64,
    r0: f64,
    r1: f64,
    q_s: f64,
    q_gamma: f64,
    s_loop: &BoundaryLoop,
    gamma_loop: &BoundaryLoop,
    convention: NormConvention,
) -> Result<ForwardMapMatrix> {
    let domain = AnnularDomain::circles(r0, r1)?;
    let basis = band_basis(&domain, s_loop, lambda)?;
    let problem = CircleProblem::new(r0, r1, q_s, q_gamma)?;
    let n_rows = 3 * gamma_loop.len();
    let mut raw = DMatrix::<f64>::zeros(n_rows, basis.len());
    for m in 0..basis.len() {
        let flux = basis_mode_series(&basis, m, r0)?;
        let sol = spectral_forward(&problem, &flux, &FourierSeries::zero())?;
        let trace = sol.trace_series(r1);
        let conormal = sol.conormal_gamma_via_robin();
        let data = crate::boundary::cauchy_from_series(&trace, &conormal, gamma_loop)?;
        for (i, v) in data.stacked().iter().enumerate() {
            raw[(i, m)] = *v;
        }
    }
    Ok(ForwardMapMatrix {
        backend: MapBackend::Spectral,
        norm_convention: convention,
        lambda,
        basis,
        raw,
    })
}

/// The analytic circle modes as Fourier series, checked against the
/// expected normalization.
fn basis_mode_series(basis: &EigenBasis, m: usize, r0: f64) -> Result<FourierSeries> {
    let lam = basis.lambdas[m];
    let k = (lam.sqrt() * r0).round() as usize;
    let amp = if k == 0 {
        1.0 / (std::f64::consts::TAU * r0).sqrt()
    } else {
        1.0 / (std::f64::consts::PI * r0).sqrt()
    };
    // Within a degenerate pair the cosine mode comes first.
    let kind = if k == 0 || m % 2 == 1 {
        ModeKind::Cos
    } else {
        ModeKind::Sin
    };
    let probe = basis.mode_field(m).values[0];
    let expected = match kind {
        ModeKind::Cos => amp,
        ModeKind::Sin => 0.0,
    };
    if (probe - expected).abs() > 1e-10 * amp.max(1.0) {
        return Err(Error::InvalidArgument(
            "basis is not the analytic circle family; use the FEM backend".into(),
        ));
    }
    Ok(FourierSeries::mode(k, kind, amp))
}

/// FEM assembly: one linear solve per basis mode against a single
/// factorization of the Robin system with the given coefficients.
pub fn assemble_forward_map_fem(
    lambda: f64,
    domain: &AnnularDomain,
    mesh: &Mesh,
    metric: &MetricTensor,
    q_s: &BoundaryField,
    q_gamma: &BoundaryField,
    convention: NormConvention,
    tol: f64,
) -> Result<ForwardMapMatrix> {
    let basis = band_basis(domain, &mesh.s_loop, lambda)?;
    let zero_gamma = BoundaryField::zeros(&mesh.gamma_loop);
    let template = RobinProblem::new(
        SourceTerm::Zero,
        q_s.clone(),
        q_gamma.clone(),
        BoundaryField::zeros(&mesh.s_loop),
        zero_gamma.clone(),
        0.0,
        q_s.values
            .iter()
            .chain(&q_gamma.values)
            .fold(f64::MIN, |m, &v| m.max(v))
            .max(1e-30),
    )?;
    let system = assemble(&template, mesh, metric)?;
    let solver = SystemSolver::new(&system.matrix)?;

    let n_rows = 3 * mesh.gamma_loop.len();
    let mut raw = DMatrix::<f64>::zeros(n_rows, basis.len());
    for m in 0..basis.len() {
        let flux = basis.mode_field(m);
        let rhs = flux_load(mesh, &flux, &zero_gamma)?;
        let nodal = solver.solve(&rhs, tol)?;
        let trace = crate::fem::trace_on(mesh, &nodal, BoundaryTag::Gamma)?;
        let mut conormal = trace.clone();
        for (i, v) in conormal.values.iter_mut().enumerate() {
            *v = -q_gamma.values[i] * trace.values[i];
        }
        let data = CauchyData::from_trace_conormal(trace, conormal)?;
        for (i, v) in data.stacked().iter().enumerate() {
            raw[(i, m)] = *v;
        }
    }
    Ok(ForwardMapMatrix {
        backend: MapBackend::Fem,
        norm_convention: convention,
        lambda,
        basis,
        raw,
    })
}

/// Everything the map assembly needs, bundled for the dispatching entry
/// point. The spectral backend additionally requires circles, a Euclidean
/// metric, and constant coefficients.
pub struct MapSetup<'a> {
    pub domain: &'a AnnularDomain,
    pub mesh: &'a Mesh,
    pub metric: &'a MetricTensor,
    pub q_s: BoundaryField,
    pub q_gamma: BoundaryField,
    pub backend: MapBackend,
    pub convention: NormConvention,
    pub tol: f64,
}

fn constant_value(f: &BoundaryField, what: &str) -> Result<f64> {
    let first = f.values[0];
    let scale = f.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    if f.values.iter().any(|v| (v - first).abs() > 1e-12 * scale) {
        return Err(Error::InvalidArgument(format!(
            "spectral backend needs a constant {what}"
        )));
    }
    Ok(first)
}

pub fn assemble_forward_map(lambda: f64, setup: &MapSetup) -> Result<ForwardMapMatrix> {
    match setup.backend {
        MapBackend::Spectral => {
            let (r0, r1) = setup.domain.radii().ok_or_else(|| {
                Error::Geometry("spectral backend requested for a non-circular domain".into())
            })?;
            if !setup.metric.is_euclidean() {
                return Err(Error::Metric(
                    "spectral backend is limited to the Euclidean metric".into(),
                ));
            }
            assemble_forward_map_spectral(
                lambda,
                r0,
                r1,
                constant_value(&setup.q_s, "q on S")?,
                constant_value(&setup.q_gamma, "q on Gamma")?,
                &setup.mesh.s_loop,
                &setup.mesh.gamma_loop,
                setup.convention,
            )
        }
        MapBackend::Fem => assemble_forward_map_fem(
            lambda,
            setup.domain,
            setup.mesh,
            setup.metric,
            &setup.q_s,
            &setup.q_gamma,
            setup.convention,
            setup.tol,
        ),
    }
}

/// Tikhonov-regularized least squares over the band: minimizes
/// `|F a - d|^2 + alpha |a|^2_{H^{1/2}(S)}`. The penalty is always taken in
/// `H^{1/2}`, matching the a-priori side of the stability estimates, so the
/// solve substitutes `z = (1 + lambda)^{1/4} c` and runs an SVD on the
/// correspondingly weighted matrix.
pub fn invert_flux(
    data: &CauchyData,
    map: &ForwardMapMatrix,
    alpha: f64,
) -> Result<InversionResult> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidArgument(
            "Tikhonov weight must be finite and nonnegative".into(),
        ));
    }
    let stacked = data.stacked();
    if stacked.len() != map.raw.nrows() {
        return Err(Error::BoundaryMismatch(format!(
            "data has {} stacked entries, map expects {}",
            stacked.len(),
            map.raw.nrows()
        )));
    }
    let g = map.weighted(NormConvention::HHalf);
    let svd = g.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let v_t = svd.v_t.as_ref().unwrap();
    let sigma = &svd.singular_values;
    let sigma_min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if alpha == 0.0 && sigma_min <= 1e-10 {
        return Err(Error::IllConditioned { sigma_min });
    }

    let d = DVector::from_column_slice(&stacked);
    let ud = u.transpose() * &d;
    let mut z = DVector::<f64>::zeros(map.n_columns());
    for i in 0..sigma.len() {
        let s = sigma[i];
        let filter = s / (s * s + alpha);
        for j in 0..map.n_columns() {
            z[j] += filter * ud[i] * v_t[(i, j)];
        }
    }
    let coeffs: Vec<f64> = z
        .iter()
        .zip(&map.basis.lambdas)
        .map(|(zj, lam)| zj / (1.0 + lam).powf(0.25))
        .collect();
    let estimate = map.basis.synthesize(&coeffs)?;

    let predicted = &map.raw * DVector::from_column_slice(&coeffs);
    let residual = (predicted - d).norm();
    Ok(InversionResult {
        estimate,
        residual,
        sigma_min,
        iterations: 1,
        converged: true,
        history: Vec::new(),
        clamp_contacts: 0,
    })
}

/// Inputs of the coefficient reconstruction. The known data are the flux
/// on both boundary parts, the source, and the Robin coefficient on Gamma;
/// the unknown is the coefficient on S, sought in the band below `lambda`
/// and inside `[0, kappa]`.
pub struct RobinSetup<'a> {
    pub domain: &'a AnnularDomain,
    pub mesh: &'a Mesh,
    pub metric: &'a MetricTensor,
    pub source: SourceTerm,
    pub flux_s: BoundaryField,
    pub flux_gamma: BoundaryField,
    pub q_gamma: BoundaryField,
    pub lambda: f64,
    pub kappa: f64,
    pub max_iterations: usize,
    pub tol: f64,
    pub alpha: f64,
}

const MISMATCH_TOL: f64 = 1e-8;
const UPDATE_TOL: f64 = 1e-9;
const STALL_WINDOW: usize = 5;
const PLATEAU_UPDATE: f64 = 1e-3;

/// Fixed-point reconstruction of q on S from Cauchy data on Gamma.
///
/// Starting from `q = kappa/2`, each pass solves the forward problem,
/// recovers the bridge flux `b = (q - q_true) u_true` from the data
/// mismatch through [`invert_flux`], divides by the current trace on S, and
/// applies the band-projected, clamped update. Iteration stops on a small
/// relative mismatch, a small update (fixed point reached, possibly at the
/// model-error floor), or the cap. Five passes without mismatch improvement
/// raise a stagnation error unless the update has already collapsed.
pub fn invert_robin(measured: &CauchyData, setup: &RobinSetup) -> Result<InversionResult> {
    if !(setup.kappa > 0.0 && setup.kappa.is_finite()) {
        return Err(Error::InvalidArgument("kappa must be positive".into()));
    }
    if measured.trace.len() != setup.mesh.gamma_loop.len() {
        return Err(Error::BoundaryMismatch(format!(
            "measured data has {} nodes, inversion mesh boundary has {}",
            measured.trace.len(),
            setup.mesh.gamma_loop.len()
        )));
    }
    let measured_norm = measured.data_norm();
    if measured_norm == 0.0 {
        return Err(Error::InvalidArgument(
            "measured data is identically zero".into(),
        ));
    }

    let mut q = BoundaryField::constant(&setup.mesh.s_loop, 0.5 * setup.kappa);
    let mut history = Vec::new();
    let mut best_mismatch = f64::INFINITY;
    let mut stalled = 0;
    let mut clamp_contacts = 0;
    let mut sigma_min = f64::NAN;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..setup.max_iterations {
        iterations = iter + 1;
        let problem = RobinProblem::new(
            setup.source.clone(),
            q.clone(),
            setup.q_gamma.clone(),
            setup.flux_s.clone(),
            setup.flux_gamma.clone(),
            0.0,
            setup.kappa,
        )?;
        let sol = solve_forward(&problem, setup.mesh, setup.metric, setup.tol)?;
        let min_u = sol
            .trace_s
            .values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_u <= 1e-12 {
            return Err(Error::Positivity {
                min_u,
                iteration: iter,
            });
        }
        let cauchy = extract_cauchy(&sol, &problem)?;
        let mismatch_data = measured.sub(&cauchy)?;
        let mismatch = mismatch_data.data_norm();
        let rel_mismatch = mismatch / measured_norm;

        if rel_mismatch <= MISMATCH_TOL {
            history.push(IterationRecord {
                iter,
                mismatch,
                update_norm: 0.0,
                min_u_on_s: min_u,
            });
            converged = true;
            break;
        }

        if mismatch < best_mismatch * (1.0 - 1e-12) {
            best_mismatch = mismatch;
            stalled = 0;
        } else {
            stalled += 1;
        }

        let map = assemble_forward_map_fem(
            setup.lambda,
            setup.domain,
            setup.mesh,
            setup.metric,
            &q,
            &setup.q_gamma,
            NormConvention::HHalf,
            setup.tol,
        )?;
        sigma_min = map.sigma_min();
        let bridge = invert_flux(&mismatch_data, &map, setup.alpha)?;

        let mut ratio = bridge.estimate.clone();
        for (v, u) in ratio.values.iter_mut().zip(&sol.trace_s.values) {
            *v /= u;
        }
        // Keep the update inside the band so iterate differences stay there.
        let update = map.basis.synthesize(&map.basis.coefficients(&ratio)?)?;
        let update_norm = update.l2_norm();
        history.push(IterationRecord {
            iter,
            mismatch,
            update_norm,
            min_u_on_s: min_u,
        });

        let rel_update = update_norm / q.l2_norm().max(1e-30);
        if rel_update <= UPDATE_TOL {
            converged = true;
            break;
        }
        if stalled >= STALL_WINDOW {
            if rel_update <= PLATEAU_UPDATE {
                // Fixed point at the model-error floor.
                converged = true;
                break;
            }
            return Err(Error::Stagnation {
                iterations: iter,
                detail: format!(
                    "mismatch not improving for {STALL_WINDOW} iterations \
                     (best {best_mismatch:.3e}, relative update {rel_update:.3e}, \
                     {clamp_contacts} clamp contacts)"
                ),
            });
        }

        clamp_contacts = 0;
        for (qv, d) in q.values.iter_mut().zip(&update.values) {
            let next = *qv - d;
            if next < 0.0 || next > setup.kappa {
                clamp_contacts += 1;
            }
            *qv = next.clamp(0.0, setup.kappa);
        }
    }

    let residual = history.last().map(|r| r.mismatch).unwrap_or(f64::NAN);
    Ok(InversionResult {
        estimate: q,
        residual,
        sigma_min,
        iterations,
        converged,
        history,
        clamp_contacts,
    })
}

/// Measurement noise: i.i.d. Gaussian perturbations on the trace and the
/// conormal, each scaled to an exact relative `L^2(Gamma)` size, with the
/// tangential derivative recomputed from the noisy trace the way a real
/// measurement pipeline would.
pub fn add_noise(data: &CauchyData, eps: f64, seed: u64) -> Result<CauchyData> {
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArgument(
            "noise level must be finite and nonnegative".into(),
        ));
    }
    if eps == 0.0 {
        return Ok(data.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturb = |field: &BoundaryField| -> BoundaryField {
        let mut noise = field.clone();
        for v in noise.values.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let target = eps * field.l2_norm();
        let raw = noise.l2_norm();
        if target == 0.0 || raw == 0.0 {
            return field.clone();
        }
        field.add_scaled(target / raw, &noise).unwrap()
    };
    let trace = perturb(&data.trace);
    let conormal = perturb(&data.conormal);
    CauchyData::from_trace_conormal(trace, conormal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{boundary_normals, build_annular_mesh};
    use approx::assert_relative_eq;

    fn circle_loops(n_s: usize, n_g: usize) -> (BoundaryLoop, BoundaryLoop) {
        (
            BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, n_s),
            BoundaryLoop::uniform_circle(BoundaryTag::Gamma, 2.0, n_g),
        )
    }

    fn fem_mesh(n_r: usize, n_a: usize) -> (AnnularDomain, Mesh) {
        let domain = AnnularDomain::circles(1.0, 2.0).unwrap();
        let mesh = build_annular_mesh(&domain, n_r, n_a).unwrap();
        let mesh = boundary_normals(mesh, &MetricTensor::Identity).unwrap();
        (domain, mesh)
    }

    #[test]
    fn map_has_expected_width_and_diagonal_gram() {
        let (s, g) = circle_loops(64, 96);
        let map = assemble_forward_map_spectral(
            9.0,
            1.0,
            2.0,
            1.0,
            1.0,
            &s,
            &g,
            NormConvention::L2,
        )
        .unwrap();
        assert_eq!(map.n_columns(), 7);

        let gram = map.raw.transpose() * &map.raw;
        let mut max_diag = 0.0_f64;
        for j in 0..7 {
            max_diag = max_diag.max(gram[(j, j)]);
            // Every column carries data: no basis flux is invisible.
            assert!(gram[(j, j)] > 1e-12);
        }
        for i in 0..7 {
            for j in 0..7 {
                if i != j {
                    assert!(
                        gram[(i, j)].abs() <= 1e-10 * max_diag,
                        "off-diagonal coupling {} at ({i},{j})",
                        gram[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn spectral_and_fem_columns_agree() {
        let (domain, mesh) = fem_mesh(16, 80);
        let q_s = BoundaryField::constant(&mesh.s_loop, 1.0);
        let q_g = BoundaryField::constant(&mesh.gamma_loop, 1.0);
        let spectral = assemble_forward_map_spectral(
            4.0,
            1.0,
            2.0,
            1.0,
            1.0,
            &mesh.s_loop,
            &mesh.gamma_loop,
            NormConvention::L2,
        )
        .unwrap();
        let fem = assemble_forward_map_fem(
            4.0,
            &domain,
            &mesh,
            &MetricTensor::Identity,
            &q_s,
            &q_g,
            NormConvention::L2,
            1e-12,
        )
        .unwrap();
        assert_eq!(spectral.n_columns(), fem.n_columns());
        for j in 0..spectral.n_columns() {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..spectral.raw.nrows() {
                num += (spectral.raw[(i, j)] - fem.raw[(i, j)]).powi(2);
                den += spectral.raw[(i, j)].powi(2);
            }
            let rel = (num / den).sqrt();
            assert!(rel < 3e-2, "column {j} differs by {rel}");
        }
    }

    #[test]
    fn spectral_backend_rejects_bad_setups() {
        let (s, g) = circle_loops(32, 48);
        drop(g);
        let domain = AnnularDomain::new(
            crate::curve::StarCurve::harmonics(1.0, vec![0.0, 0.1], vec![]).unwrap(),
            crate::curve::StarCurve::circle(2.0).unwrap(),
            0.1,
        )
        .unwrap();
        let mesh = build_annular_mesh(&domain, 4, 32).unwrap();
        let mesh = boundary_normals(mesh, &MetricTensor::Identity).unwrap();
        let setup = MapSetup {
            domain: &domain,
            mesh: &mesh,
            metric: &MetricTensor::Identity,
            q_s: BoundaryField::constant(&mesh.s_loop, 1.0),
            q_gamma: BoundaryField::constant(&mesh.gamma_loop, 1.0),
            backend: MapBackend::Spectral,
            convention: NormConvention::L2,
            tol: 1e-10,
        };
        assert!(matches!(
            assemble_forward_map(9.0, &setup),
            Err(Error::Geometry(_))
        ));
        drop(s);
    }

    fn synthesize_data(flux: &FourierSeries, gamma_loop: &BoundaryLoop) -> CauchyData {
        let problem = CircleProblem::new(1.0, 2.0, 1.0, 1.0).unwrap();
        let sol = spectral_forward(&problem, flux, &FourierSeries::zero()).unwrap();
        crate::boundary::cauchy_from_series(
            &sol.trace_series(2.0),
            &sol.conormal_gamma_via_robin(),
            gamma_loop,
        )
        .unwrap()
    }

    #[test]
    fn flux_recovery_is_exact_on_the_band() {
        let (s, g) = circle_loops(64, 96);
        let map =
            assemble_forward_map_spectral(25.0, 1.0, 2.0, 1.0, 1.0, &s, &g, NormConvention::HHalf)
                .unwrap();
        // cos(2 theta) - 0.5 sin(theta)
        let mut truth_series = FourierSeries::mode(2, ModeKind::Cos, 1.0);
        truth_series.sin = vec![-0.5, 0.0];
        let data = synthesize_data(&truth_series, &g);
        let result = invert_flux(&data, &map, 0.0).unwrap();
        assert!(result.sigma_min > 1e-10);

        let exact = BoundaryField::from_loop_fn(&s, |t| (2.0 * t).cos() - 0.5 * t.sin());
        let diff = result.estimate.sub(&exact).unwrap().l2_norm();
        let rel = diff / exact.l2_norm();
        assert!(rel <= 1e-6, "relative recovery error {rel}");
        assert!(result.residual <= 1e-8 * data.data_norm());
    }

    #[test]
    fn zero_data_gives_zero_estimate() {
        let (s, g) = circle_loops(32, 48);
        let map =
            assemble_forward_map_spectral(9.0, 1.0, 2.0, 1.0, 1.0, &s, &g, NormConvention::L2)
                .unwrap();
        let zero = CauchyData::from_trace_conormal(
            BoundaryField::zeros(&g),
            BoundaryField::zeros(&g),
        )
        .unwrap();
        let result = invert_flux(&zero, &map, 0.0).unwrap();
        assert_eq!(result.estimate.l2_norm(), 0.0);
        assert_eq!(result.residual, 0.0);
    }

    #[test]
    fn noise_scales_exactly_and_error_stays_bounded() {
        let (s, g) = circle_loops(64, 96);
        let map =
            assemble_forward_map_spectral(25.0, 1.0, 2.0, 1.0, 1.0, &s, &g, NormConvention::HHalf)
                .unwrap();
        let truth = FourierSeries::mode(2, ModeKind::Cos, 1.0);
        let data = synthesize_data(&truth, &g);

        let eps = 1e-3;
        let noisy = add_noise(&data, eps, 42).unwrap();
        let dt = noisy.trace.sub(&data.trace).unwrap().l2_norm() / data.trace.l2_norm();
        assert_relative_eq!(dt, eps, epsilon = 1e-12);
        let dc = noisy.conormal.sub(&data.conormal).unwrap().l2_norm() / data.conormal.l2_norm();
        assert_relative_eq!(dc, eps, epsilon = 1e-12);

        let again = add_noise(&data, eps, 42).unwrap();
        assert_eq!(again.trace.values, noisy.trace.values);
        let other = add_noise(&data, eps, 43).unwrap();
        assert_ne!(other.trace.values, noisy.trace.values);
        let clean = add_noise(&data, 0.0, 42).unwrap();
        assert_eq!(clean.trace.values, data.trace.values);

        let exact = BoundaryField::from_loop_fn(&s, |t| (2.0 * t).cos());
        let result = invert_flux(&noisy, &map, 0.0).unwrap();
        let rel = result.estimate.sub(&exact).unwrap().l2_norm() / exact.l2_norm();
        let bound = 10.0 * map.cond() * eps;
        assert!(rel <= bound, "noisy recovery error {rel} above {bound}");
    }

    fn robin_setup<'a>(
        domain: &'a AnnularDomain,
        mesh: &'a Mesh,
        metric: &'a MetricTensor,
        lambda: f64,
        kappa: f64,
    ) -> RobinSetup<'a> {
        RobinSetup {
            domain,
            mesh,
            metric,
            source: SourceTerm::Zero,
            flux_s: BoundaryField::zeros(&mesh.s_loop),
            flux_gamma: BoundaryField::constant(&mesh.gamma_loop, 1.0),
            q_gamma: BoundaryField::constant(&mesh.gamma_loop, 1.0),
            lambda,
            kappa,
            max_iterations: 25,
            tol: 1e-12,
            alpha: 0.0,
        }
    }

    fn forward_cauchy(mesh: &Mesh, q_s_fn: impl Fn(f64) -> f64, kappa: f64) -> CauchyData {
        let problem = RobinProblem::from_fns(
            mesh,
            SourceTerm::Zero,
            q_s_fn,
            |_| 1.0,
            |_| 0.0,
            |_| 1.0,
            kappa,
        )
        .unwrap();
        let sol = solve_forward(&problem, mesh, &MetricTensor::Identity, 1e-12).unwrap();
        extract_cauchy(&sol, &problem).unwrap()
    }

    #[test]
    fn coefficient_fixed_point_converges_immediately() {
        let (domain, mesh) = fem_mesh(8, 48);
        let measured = forward_cauchy(&mesh, |_| 0.5, 1.0);
        let setup = robin_setup(&domain, &mesh, &MetricTensor::Identity, 4.0, 1.0);
        let result = invert_robin(&measured, &setup).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 1);
        assert_eq!(result.history[0].update_norm, 0.0);
        for v in &result.estimate.values {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn coefficient_recovery_across_meshes() {
        let (_, fine) = fem_mesh(20, 120);
        let (domain, coarse) = fem_mesh(10, 60);
        let measured_fine = forward_cauchy(&fine, |t| 0.5 + 0.3 * (2.0 * t).cos(), 1.0);
        let measured = measured_fine.resample(&coarse.gamma_loop).unwrap();

        let setup = robin_setup(&domain, &coarse, &MetricTensor::Identity, 4.0, 1.0);
        let result = invert_robin(&measured, &setup).unwrap();
        assert!(result.converged, "history: {:?}", result.history);
        assert!(result.iterations <= 20);

        let truth = BoundaryField::from_loop_fn(&coarse.s_loop, |t| 0.5 + 0.3 * (2.0 * t).cos());
        let rel = result.estimate.sub(&truth).unwrap().l2_norm() / truth.l2_norm();
        assert!(rel <= 0.05, "recovery error {rel}");

        // Mismatch decreases apart from solver-level jitter at the
        // model-error floor.
        let jitter = 1e-9 * (1.0 + result.history[0].mismatch);
        for w in result.history.windows(2) {
            assert!(
                w[1].mismatch <= w[0].mismatch + jitter,
                "history: {:?}",
                result.history
            );
        }
        assert_eq!(result.clamp_contacts, 0);

        // Updates stay in the band, so the estimate minus the constant
        // start does too.
        let map = assemble_forward_map_fem(
            4.0,
            &domain,
            &coarse,
            &MetricTensor::Identity,
            &result.estimate,
            &setup.q_gamma,
            NormConvention::HHalf,
            1e-12,
        )
        .unwrap();
        let start = BoundaryField::constant(&coarse.s_loop, 0.5);
        let drift = result.estimate.sub(&start).unwrap();
        let projected = map
            .basis
            .synthesize(&map.basis.coefficients(&drift).unwrap())
            .unwrap();
        let out_of_band = drift.sub(&projected).unwrap().l2_norm();
        assert!(out_of_band <= 1e-10, "band leakage {out_of_band}");
    }

    #[test]
    fn truth_outside_the_cap_stagnates_with_contact_report() {
        let (_, fine) = fem_mesh(16, 96);
        let (domain, coarse) = fem_mesh(8, 48);
        let measured_fine = forward_cauchy(&fine, |_| 1.6, 2.0);
        let measured = measured_fine.resample(&coarse.gamma_loop).unwrap();

        let mut setup = robin_setup(&domain, &coarse, &MetricTensor::Identity, 4.0, 1.0);
        setup.max_iterations = 40;
        match invert_robin(&measured, &setup) {
            Err(Error::Stagnation { detail, .. }) => {
                assert!(detail.contains("clamp contacts"), "detail: {detail}");
            }
            other => panic!("expected stagnation, got {other:?}"),
        }
    }

    #[test]
    fn bridge_flux_reproduces_the_difference_of_solutions() {
        let (_, mesh) = fem_mesh(12, 64);
        let metric = MetricTensor::Identity;
        let q1 = 0.6;
        let q2 = 1.0;
        let p1 = RobinProblem::from_fns(
            &mesh,
            SourceTerm::Zero,
            move |_| q1,
            |_| 1.0,
            |_| 0.0,
            |_| 1.0,
            1.0,
        )
        .unwrap();
        let p2 = RobinProblem::from_fns(
            &mesh,
            SourceTerm::Zero,
            move |_| q2,
            |_| 1.0,
            |_| 0.0,
            |_| 1.0,
            1.0,
        )
        .unwrap();
        let u1 = solve_forward(&p1, &mesh, &metric, 1e-13).unwrap();
        let u2 = solve_forward(&p2, &mesh, &metric, 1e-13).unwrap();

        // Solve the homogeneous problem with the bridge flux on S.
        let bridge_values: Vec<f64> = u2.trace_s.values.iter().map(|u| (q2 - q1) * u).collect();
        let bridge = BoundaryField::from_values(&mesh.s_loop, bridge_values).unwrap();
        let pv = RobinProblem::new(
            SourceTerm::Zero,
            BoundaryField::constant(&mesh.s_loop, q1),
            BoundaryField::constant(&mesh.gamma_loop, 1.0),
            bridge,
            BoundaryField::zeros(&mesh.gamma_loop),
            0.0,
            1.0,
        )
        .unwrap();
        let w = solve_forward(&pv, &mesh, &metric, 1e-13).unwrap();

        let mut num = 0.0;
        let mut den = 0.0;
        for ((a, b), c) in u1.nodal.iter().zip(&u2.nodal).zip(&w.nodal) {
            let v = a - b;
            num += (c - v) * (c - v);
            den += v * v;
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-2, "bridge mismatch {rel}");
    }
}
