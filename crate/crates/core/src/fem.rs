//! P1 finite elements for the Robin problem on the annulus.
//!
//! The weak form pairs gradients through the inverse metric and weighs
//! everything by the metric volume and surface measures:
//!
//! ```text
//!   h(u, v) = int_D grad(u)^T G^-1 grad(v) sqrt|g| dx
//!           + p int_D u v sqrt|g| dx + int_dD q u v dS_g
//! ```
//!
//! Stiffness and mass use the barycenter rule, boundary terms two-point
//! Gauss; with P1 elements and Lipschitz coefficients nothing sharper is
//! needed. The conormal derivative on the outer boundary is read off the
//! Robin identity instead of differentiating the solution, which keeps the
//! measured data free of gradient-recovery noise.

use std::sync::Arc;

use crate::boundary::{BoundaryField, CauchyData};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryLoop, BoundaryTag, Mesh};
use crate::metric::{MetricData, MetricTensor};
use crate::solver::{CsrMatrix, LinearSystem};

/// Volume source f. `Func` takes Cartesian coordinates.
#[derive(Clone)]
pub enum SourceTerm {
    Zero,
    Constant(f64),
    Func(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl SourceTerm {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            SourceTerm::Zero => 0.0,
            SourceTerm::Constant(c) => *c,
            SourceTerm::Func(f) => f(x, y),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SourceTerm::Zero)
    }
}

impl std::fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceTerm::Zero => write!(f, "Zero"),
            SourceTerm::Constant(c) => write!(f, "Constant({c})"),
            SourceTerm::Func(_) => write!(f, "Func(..)"),
        }
    }
}

/// One fully specified boundary-value problem: source, Robin coefficients
/// on both loops, prescribed fluxes, constant absorption p, and the
/// admissibility cap kappa that the coefficient must stay under.
#[derive(Debug, Clone)]
pub struct RobinProblem {
    pub source: SourceTerm,
    pub q_s: BoundaryField,
    pub q_gamma: BoundaryField,
    pub flux_s: BoundaryField,
    pub flux_gamma: BoundaryField,
    pub absorption: f64,
    pub kappa: f64,
}

impl RobinProblem {
    pub fn new(
        source: SourceTerm,
        q_s: BoundaryField,
        q_gamma: BoundaryField,
        flux_s: BoundaryField,
        flux_gamma: BoundaryField,
        absorption: f64,
        kappa: f64,
    ) -> Result<Self> {
        let p = RobinProblem {
            source,
            q_s,
            q_gamma,
            flux_s,
            flux_gamma,
            absorption,
            kappa,
        };
        p.validate()?;
        Ok(p)
    }

    /// Sample everything from angular functions on the mesh loops, with
    /// no absorption.
    pub fn from_fns(
        mesh: &Mesh,
        source: SourceTerm,
        q_s: impl Fn(f64) -> f64,
        q_gamma: impl Fn(f64) -> f64,
        flux_s: impl Fn(f64) -> f64,
        flux_gamma: impl Fn(f64) -> f64,
        kappa: f64,
    ) -> Result<Self> {
        Self::new(
            source,
            BoundaryField::from_loop_fn(&mesh.s_loop, q_s),
            BoundaryField::from_loop_fn(&mesh.gamma_loop, q_gamma),
            BoundaryField::from_loop_fn(&mesh.s_loop, flux_s),
            BoundaryField::from_loop_fn(&mesh.gamma_loop, flux_gamma),
            0.0,
            kappa,
        )
    }

    pub fn sup_q(&self) -> f64 {
        self.q_s
            .values
            .iter()
            .chain(&self.q_gamma.values)
            .fold(0.0, |m, &v| m.max(v))
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_s.tag != BoundaryTag::S || self.flux_s.tag != BoundaryTag::S {
            return Err(Error::BoundaryMismatch(
                "q_s and flux_s must live on the inner loop".into(),
            ));
        }
        if self.q_gamma.tag != BoundaryTag::Gamma || self.flux_gamma.tag != BoundaryTag::Gamma {
            return Err(Error::BoundaryMismatch(
                "q_gamma and flux_gamma must live on the outer loop".into(),
            ));
        }
        for (name, f) in [("q_s", &self.q_s), ("q_gamma", &self.q_gamma)] {
            if f.values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be nonnegative and finite"
                )));
            }
        }
        if !(self.absorption >= 0.0 && self.absorption.is_finite()) {
            return Err(Error::InvalidArgument(
                "absorption must be a finite nonnegative constant".into(),
            ));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidArgument("kappa must be positive".into()));
        }
        if self.sup_q() > self.kappa * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "sup q = {:.6e} exceeds the cap kappa = {:.6e}",
                self.sup_q(),
                self.kappa
            )));
        }
        // Weighted integral of q over both loops; a strictly interior lump
        // of q would pass, q identically zero with p = 0 cannot.
        let q_total: f64 = self
            .q_s
            .weights
            .iter()
            .zip(&self.q_s.values)
            .chain(self.q_gamma.weights.iter().zip(&self.q_gamma.values))
            .map(|(w, v)| w * v)
            .sum();
        if q_total <= 0.0 && self.absorption == 0.0 {
            return Err(Error::Coercivity(
                "q vanishes identically on the boundary and the absorption is zero".into(),
            ));
        }
        Ok(())
    }

    fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.q_s.len() != mesh.s_loop.len() || self.q_gamma.len() != mesh.gamma_loop.len() {
            return Err(Error::BoundaryMismatch(format!(
                "problem fields ({}/{} nodes) do not match mesh loops ({}/{} nodes)",
                self.q_s.len(),
                self.q_gamma.len(),
                mesh.s_loop.len(),
                mesh.gamma_loop.len()
            )));
        }
        Ok(())
    }
}

/// Gradients of the three hat functions (constant over the triangle) and
/// the signed area.
fn p1_gradients(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> ([[f64; 2]; 3], f64) {
    let two_a = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let grads = [
        [(b[1] - c[1]) / two_a, (c[0] - b[0]) / two_a],
        [(c[1] - a[1]) / two_a, (a[0] - c[0]) / two_a],
        [(a[1] - b[1]) / two_a, (b[0] - a[0]) / two_a],
    ];
    (grads, 0.5 * two_a)
}

pub(crate) fn element_stiffness(coords: [[f64; 2]; 3], m: &MetricData) -> [[f64; 3]; 3] {
    let (grads, area) = p1_gradients(coords[0], coords[1], coords[2]);
    let gi = &m.g_inv;
    let mut k = [[0.0; 3]; 3];
    // Fill the upper triangle and mirror so the matrix is symmetric to the
    // last bit, not just in exact arithmetic.
    for i in 0..3 {
        for j in i..3 {
            let gx = gi[0][0] * grads[j][0] + gi[0][1] * grads[j][1];
            let gy = gi[1][0] * grads[j][0] + gi[1][1] * grads[j][1];
            let v = area * m.sqrt_det * (grads[i][0] * gx + grads[i][1] * gy);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

/// Gradient-term part of the form on its own. Row sums vanish because
/// constants have no gradient.
pub fn assemble_stiffness(mesh: &Mesh, metric: &MetricTensor) -> Result<CsrMatrix> {
    let n = mesh.n_vertices();
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len());
    for t in &mesh.triangles {
        let coords = [mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]];
        let bc = [
            (coords[0][0] + coords[1][0] + coords[2][0]) / 3.0,
            (coords[0][1] + coords[1][1] + coords[2][1]) / 3.0,
        ];
        let k = element_stiffness(coords, &metric.eval(bc[0], bc[1]));
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((t[i], t[j], k[i][j]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, &triplets))
}

/// Positions of boundary vertices inside their loop, or MAX for interior.
fn loop_positions(lp: &BoundaryLoop, n_vertices: usize) -> Vec<usize> {
    let mut pos = vec![usize::MAX; n_vertices];
    for (k, &v) in lp.vertices.iter().enumerate() {
        pos[v] = k;
    }
    pos
}

// Barycentric parameters of the two stored Gauss points along an edge.
const EDGE_GAUSS_T: [f64; 2] = [0.5 - 0.5 / 1.732_050_807_568_877_2, 0.5 + 0.5 / 1.732_050_807_568_877_2];

/// Load vector of the prescribed fluxes: `rhs_i = int_dD a phi_i dS_g`,
/// with the flux interpolated linearly along each edge.
pub fn flux_load(
    mesh: &Mesh,
    flux_s: &BoundaryField,
    flux_gamma: &BoundaryField,
) -> Result<Vec<f64>> {
    let n = mesh.n_vertices();
    let pos_s = loop_positions(&mesh.s_loop, n);
    let pos_g = loop_positions(&mesh.gamma_loop, n);
    let mut rhs = vec![0.0; n];
    for e in &mesh.edges {
        let (field, pos) = match e.tag {
            BoundaryTag::S => (flux_s, &pos_s),
            BoundaryTag::Gamma => (flux_gamma, &pos_g),
        };
        let [a, b] = e.vertices;
        let (fa, fb) = (field.values[pos[a]], field.values[pos[b]]);
        for (g, &t) in EDGE_GAUSS_T.iter().enumerate() {
            let w = e.gauss[g].weight;
            let f = (1.0 - t) * fa + t * fb;
            rhs[a] += w * f * (1.0 - t);
            rhs[b] += w * f * t;
        }
    }
    Ok(rhs)
}

/// Full Galerkin system for the problem: stiffness, absorption mass, Robin
/// boundary mass, and the combined source and flux load.
pub fn assemble(problem: &RobinProblem, mesh: &Mesh, metric: &MetricTensor) -> Result<LinearSystem> {
    if !mesh.metric_filled {
        return Err(Error::Mesh(
            "mesh is missing induced boundary data; run boundary_normals first".into(),
        ));
    }
    problem.validate()?;
    problem.check_mesh(mesh)?;

    let n = mesh.n_vertices();
    let mut triplets = Vec::with_capacity(9 * mesh.triangles.len() + 8 * mesh.edges.len());

    for (k, t) in mesh.triangles.iter().enumerate() {
        let coords = [mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]];
        let bc = [
            (coords[0][0] + coords[1][0] + coords[2][0]) / 3.0,
            (coords[0][1] + coords[1][1] + coords[2][1]) / 3.0,
        ];
        let ke = element_stiffness(coords, &metric.eval(bc[0], bc[1]));
        let w = mesh.tri_weights[k];
        for i in 0..3 {
            for j in 0..3 {
                let mut v = ke[i][j];
                if problem.absorption > 0.0 {
                    let mass = if i == j { w / 6.0 } else { w / 12.0 };
                    v += problem.absorption * mass;
                }
                triplets.push((t[i], t[j], v));
            }
        }
    }

    let pos_s = loop_positions(&mesh.s_loop, n);
    let pos_g = loop_positions(&mesh.gamma_loop, n);
    for e in &mesh.edges {
        let (q, pos) = match e.tag {
            BoundaryTag::S => (&problem.q_s, &pos_s),
            BoundaryTag::Gamma => (&problem.q_gamma, &pos_g),
        };
        let [a, b] = e.vertices;
        let (qa, qb) = (q.values[pos[a]], q.values[pos[b]]);
        for (g, &t) in EDGE_GAUSS_T.iter().enumerate() {
            let w = e.gauss[g].weight;
            let qg = (1.0 - t) * qa + t * qb;
            let (pa, pb) = (1.0 - t, t);
            let off = w * qg * pa * pb;
            triplets.push((a, a, w * qg * pa * pa));
            triplets.push((a, b, off));
            triplets.push((b, a, off));
            triplets.push((b, b, w * qg * pb * pb));
        }
    }

    let mut rhs = flux_load(mesh, &problem.flux_s, &problem.flux_gamma)?;
    if !problem.source.is_zero() {
        for (k, t) in mesh.triangles.iter().enumerate() {
            let w = mesh.tri_weights[k];
            let f: Vec<f64> = t
                .iter()
                .map(|&v| problem.source.eval(mesh.vertices[v][0], mesh.vertices[v][1]))
                .collect();
            for i in 0..3 {
                rhs[t[i]] += w / 12.0 * (2.0 * f[i] + f[(i + 1) % 3] + f[(i + 2) % 3]);
            }
        }
    }

    Ok(LinearSystem {
        matrix: CsrMatrix::from_triplets(n, &triplets),
        rhs,
    })
}

/// Solved forward problem with its boundary restrictions.
#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub nodal: Vec<f64>,
    pub trace_s: BoundaryField,
    pub trace_gamma: BoundaryField,
    /// Conormal derivative on the outer boundary from the Robin identity
    /// `d_nu u = a_gamma - q_gamma u`, exact for the discrete solution.
    pub conormal_gamma: BoundaryField,
    /// Discrete energy h(u, u).
    pub energy: f64,
}

pub fn trace_on(mesh: &Mesh, nodal: &[f64], tag: BoundaryTag) -> Result<BoundaryField> {
    let lp = match tag {
        BoundaryTag::S => &mesh.s_loop,
        BoundaryTag::Gamma => &mesh.gamma_loop,
    };
    let values = lp.vertices.iter().map(|&v| nodal[v]).collect();
    BoundaryField::from_values(lp, values)
}

pub fn solve_forward(
    problem: &RobinProblem,
    mesh: &Mesh,
    metric: &MetricTensor,
    tol: f64,
) -> Result<ForwardSolution> {
    let system = assemble(problem, mesh, metric)?;
    let nodal = system.solve(tol)?;
    let trace_s = trace_on(mesh, &nodal, BoundaryTag::S)?;
    let trace_gamma = trace_on(mesh, &nodal, BoundaryTag::Gamma)?;
    let mut conormal_gamma = trace_gamma.clone();
    for (i, v) in conormal_gamma.values.iter_mut().enumerate() {
        *v = problem.flux_gamma.values[i] - problem.q_gamma.values[i] * trace_gamma.values[i];
    }
    let energy = system.matrix.quadratic_form(&nodal);
    Ok(ForwardSolution {
        nodal,
        trace_s,
        trace_gamma,
        conormal_gamma,
        energy,
    })
}

/// Measurement on the outer boundary: trace, its edgewise tangential
/// derivative, and the Robin-identity conormal.
pub fn extract_cauchy(solution: &ForwardSolution, problem: &RobinProblem) -> Result<CauchyData> {
    let mut conormal = solution.trace_gamma.clone();
    for (i, v) in conormal.values.iter_mut().enumerate() {
        *v = problem.flux_gamma.values[i] - problem.q_gamma.values[i] * solution.trace_gamma.values[i];
    }
    CauchyData::from_trace_conormal(solution.trace_gamma.clone(), conormal)
}

/// `L^2(D)` distance between the P1 field and a reference function,
/// integrated with the edge-midpoint rule (exact for quadratics).
pub fn l2_error(mesh: &Mesh, nodal: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for (k, t) in mesh.triangles.iter().enumerate() {
        let w = mesh.tri_weights[k] / 3.0;
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            let mp = [
                0.5 * (mesh.vertices[a][0] + mesh.vertices[b][0]),
                0.5 * (mesh.vertices[a][1] + mesh.vertices[b][1]),
            ];
            let uh = 0.5 * (nodal[a] + nodal[b]);
            let d = uh - exact(mp[0], mp[1]);
            acc += w * d * d;
        }
    }
    acc.sqrt()
}

pub fn l2_norm(mesh: &Mesh, nodal: &[f64]) -> f64 {
    l2_error(mesh, nodal, |_, _| 0.0)
}

/// Metric `H^1(D)` seminorm distance to a reference gradient, one point
/// per triangle for the reference.
pub fn h1_seminorm_error(
    mesh: &Mesh,
    metric: &MetricTensor,
    nodal: &[f64],
    exact_grad: impl Fn(f64, f64) -> [f64; 2],
) -> f64 {
    let mut acc = 0.0;
    for (k, t) in mesh.triangles.iter().enumerate() {
        let coords = [mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]];
        let (grads, _) = p1_gradients(coords[0], coords[1], coords[2]);
        let bc = [
            (coords[0][0] + coords[1][0] + coords[2][0]) / 3.0,
            (coords[0][1] + coords[1][1] + coords[2][1]) / 3.0,
        ];
        let ge = exact_grad(bc[0], bc[1]);
        let mut d = [-ge[0], -ge[1]];
        for i in 0..3 {
            d[0] += nodal[t[i]] * grads[i][0];
            d[1] += nodal[t[i]] * grads[i][1];
        }
        let m = metric.eval(bc[0], bc[1]);
        let gx = m.g_inv[0][0] * d[0] + m.g_inv[0][1] * d[1];
        let gy = m.g_inv[1][0] * d[0] + m.g_inv[1][1] * d[1];
        acc += mesh.tri_weights[k] * (d[0] * gx + d[1] * gy);
    }
    acc.max(0.0).sqrt()
}

/// Full metric `H^1(D)` norm of the P1 field.
pub fn h1_norm(mesh: &Mesh, metric: &MetricTensor, nodal: &[f64]) -> f64 {
    let l2 = l2_norm(mesh, nodal);
    let semi = h1_seminorm_error(mesh, metric, nodal, |_, _| [0.0, 0.0]);
    (l2 * l2 + semi * semi).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::AnnularDomain;
    use crate::mesh::{boundary_normals, build_annular_mesh};
    use crate::solver::{dot, SystemSolver};
    use crate::spectral::{spectral_forward, CircleProblem, FourierSeries, ModeKind};
    use approx::assert_relative_eq;

    fn radial_mesh(n_r: usize, n_a: usize) -> Mesh {
        let domain = AnnularDomain::circles(1.0, 2.0).unwrap();
        let mesh = build_annular_mesh(&domain, n_r, n_a).unwrap();
        boundary_normals(mesh, &MetricTensor::Identity).unwrap()
    }

    fn radial_problem(mesh: &Mesh) -> RobinProblem {
        RobinProblem::from_fns(mesh, SourceTerm::Zero, |_| 1.0, |_| 1.0, |_| 0.0, |_| 1.0, 1.0)
            .unwrap()
    }

    // u = a + b ln r with a = b = 1/(3/2 + ln 2).
    fn radial_exact() -> (f64, f64) {
        let a = 1.0 / (1.5 + 2.0_f64.ln());
        (a, a)
    }

    #[test]
    fn element_stiffness_hand_oracle() {
        let coords = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let m = MetricTensor::constant([[4.0, 0.0], [0.0, 1.0]])
            .unwrap()
            .eval(0.0, 0.0);
        let k = element_stiffness(coords, &m);
        // area 1/2, sqrt|g| = 2, g^-1 = diag(1/4, 1):
        // K = [[1.25, -0.25, -1.0], [-0.25, 0.25, 0.0], [-1.0, 0.0, 1.0]]
        let want = [[1.25, -0.25, -1.0], [-0.25, 0.25, 0.0], [-1.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(k[i][j], want[i][j], epsilon = 1e-14);
            }
        }
        let id = MetricTensor::Identity.eval(0.0, 0.0);
        let k0 = element_stiffness(coords, &id);
        assert_relative_eq!(k0[0][0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(k0[1][2], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_data_gives_zero_everything() {
        let mesh = radial_mesh(4, 24);
        let problem = RobinProblem::from_fns(
            &mesh,
            SourceTerm::Zero,
            |_| 1.0,
            |_| 1.0,
            |_| 0.0,
            |_| 0.0,
            1.0,
        )
        .unwrap();
        let system = assemble(&problem, &mesh, &MetricTensor::Identity).unwrap();
        assert!(system.rhs.iter().all(|&v| v == 0.0));
        let sol = solve_forward(&problem, &mesh, &MetricTensor::Identity, 1e-12).unwrap();
        assert!(sol.nodal.iter().all(|&v| v == 0.0));
        let cauchy = extract_cauchy(&sol, &problem).unwrap();
        assert_eq!(cauchy.data_norm(), 0.0);
    }

    #[test]
    fn stiffness_row_sums_vanish() {
        let mesh = radial_mesh(8, 40);
        let k = assemble_stiffness(&mesh, &MetricTensor::Identity).unwrap();
        let ones = vec![1.0; mesh.n_vertices()];
        let mut out = vec![0.0; mesh.n_vertices()];
        k.matvec(&ones, &mut out);
        let worst = out.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-12, "row sum {worst}");
    }

    #[test]
    fn system_is_symmetric_and_positive() {
        let mesh = radial_mesh(6, 30);
        let problem = radial_problem(&mesh);
        let system = assemble(&problem, &mesh, &MetricTensor::Identity).unwrap();
        assert_eq!(system.matrix.max_asymmetry(), 0.0);
        let mut rng_state = 0x9e3779b97f4a7c15_u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..5 {
            let x: Vec<f64> = (0..mesh.n_vertices()).map(|_| next()).collect();
            assert!(system.matrix.quadratic_form(&x) > 0.0);
        }
    }

    #[test]
    fn radial_benchmark_and_energy_identity() {
        let mesh = radial_mesh(16, 80);
        let problem = radial_problem(&mesh);
        let system = assemble(&problem, &mesh, &MetricTensor::Identity).unwrap();
        let sol = solve_forward(&problem, &mesh, &MetricTensor::Identity, 1e-12).unwrap();

        let (a, b) = radial_exact();
        let mut worst = 0.0_f64;
        for (v, &u) in mesh.vertices.iter().zip(&sol.nodal) {
            let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
            worst = worst.max((u - (a + b * r.ln())).abs());
        }
        assert!(worst < 5e-3, "nodal error {worst}");

        let load_work = dot(&system.rhs, &sol.nodal);
        assert!(
            (sol.energy - load_work).abs() <= 1e-10 * load_work.abs(),
            "energy {} vs load work {}",
            sol.energy,
            load_work
        );

        let cauchy = extract_cauchy(&sol, &problem).unwrap();
        let trace_exact = a + b * 2.0_f64.ln();
        for (t, c) in cauchy.trace.values.iter().zip(&cauchy.conormal.values) {
            assert!((t - trace_exact).abs() < 5e-3);
            assert!((c - (1.0 - trace_exact)).abs() < 5e-3);
        }
    }

    #[test]
    fn convergence_orders_against_radial_oracle() {
        let (a, b) = radial_exact();
        let exact = move |x: f64, y: f64| a + b * (x * x + y * y).sqrt().ln();
        let exact_grad = move |x: f64, y: f64| {
            let r2 = x * x + y * y;
            [b * x / r2, b * y / r2]
        };
        let mut l2 = Vec::new();
        let mut h1 = Vec::new();
        for (nr, na) in [(8, 40), (16, 80), (32, 160)] {
            let mesh = radial_mesh(nr, na);
            let problem = radial_problem(&mesh);
            let sol = solve_forward(&problem, &mesh, &MetricTensor::Identity, 1e-12).unwrap();
            l2.push(l2_error(&mesh, &sol.nodal, exact));
            h1.push(h1_seminorm_error(
                &mesh,
                &MetricTensor::Identity,
                &sol.nodal,
                exact_grad,
            ));
        }
        let l2_order = (l2[1] / l2[2]).ln() / 2.0_f64.ln();
        let h1_order = (h1[1] / h1[2]).ln() / 2.0_f64.ln();
        assert!((l2_order - 2.0).abs() < 0.3, "L2 order {l2_order}, errors {l2:?}");
        assert!((h1_order - 1.0).abs() < 0.3, "H1 order {h1_order}, errors {h1:?}");
    }

    #[test]
    fn flux_mode_stays_in_its_fourier_channel() {
        let mesh = radial_mesh(12, 96);
        let problem = RobinProblem::from_fns(
            &mesh,
            SourceTerm::Zero,
            |_| 1.0,
            |_| 1.0,
            |t| (2.0 * t).cos(),
            |_| 0.0,
            1.0,
        )
        .unwrap();
        let sol = solve_forward(&problem, &mesh, &MetricTensor::Identity, 1e-12).unwrap();
        let series = FourierSeries::from_samples(
            &sol.trace_gamma.values,
            &sol.trace_gamma.angles,
            &sol.trace_gamma.weights,
            10,
        );

        let circle = CircleProblem::new(1.0, 2.0, 1.0, 1.0).unwrap();
        let exact = spectral_forward(
            &circle,
            &FourierSeries::mode(2, ModeKind::Cos, 1.0),
            &FourierSeries::zero(),
        )
        .unwrap();
        let want = exact.trace_series(2.0).coef(2, ModeKind::Cos);
        let got = series.coef(2, ModeKind::Cos);
        assert!(
            (got - want).abs() < 0.02 * want.abs(),
            "mode 2 amplitude {got} vs {want}"
        );
        assert!(series.a0.abs() < 1e-8);
        for n in 1..=10 {
            if n == 2 {
                continue;
            }
            assert!(series.coef(n, ModeKind::Cos).abs() < 1e-8, "cos {n} leaked");
        }
        for n in 1..=10 {
            assert!(series.coef(n, ModeKind::Sin).abs() < 1e-8, "sin {n} leaked");
        }
    }

    #[test]
    fn comparison_monotonicity_in_q() {
        let mesh = radial_mesh(10, 64);
        let kappa_sol = solve_forward(
            &radial_problem(&mesh),
            &mesh,
            &MetricTensor::Identity,
            1e-12,
        )
        .unwrap();
        for q in [
            |_t: f64| 0.2,
            |t: f64| 0.5 + 0.3 * (2.0 * t).cos(),
        ] {
            let problem =
                RobinProblem::from_fns(&mesh, SourceTerm::Zero, q, q, |_| 0.0, |_| 1.0, 1.0)
                    .unwrap();
            let sol = solve_forward(&problem, &mesh, &MetricTensor::Identity, 1e-12).unwrap();
            let worst = sol
                .nodal
                .iter()
                .zip(&kappa_sol.nodal)
                .map(|(u, uk)| u - uk)
                .fold(f64::INFINITY, f64::min);
            assert!(worst >= -1e-8, "comparison violated by {worst}");
        }
    }

    #[test]
    fn rhs_perturbation_bounded_by_inverse_spectral_gap() {
        let mesh = radial_mesh(8, 40);
        let problem = radial_problem(&mesh);
        let system = assemble(&problem, &mesh, &MetricTensor::Identity).unwrap();
        let solver = SystemSolver::new(&system.matrix).unwrap();

        // Inverse power iteration for the smallest eigenvalue.
        let n = mesh.n_vertices();
        let mut x = vec![1.0; n];
        let mut lambda_min = 0.0;
        for _ in 0..30 {
            let y = solver.solve(&x, 1e-12).unwrap();
            let norm = dot(&y, &y).sqrt();
            x = y.iter().map(|v| v / norm).collect();
            lambda_min = system.matrix.quadratic_form(&x);
        }
        assert!(lambda_min > 0.0);

        let u = solver.solve(&system.rhs, 1e-13).unwrap();
        let eps = 1e-3;
        let mut rhs2 = system.rhs.clone();
        rhs2[0] += eps;
        let u2 = solver.solve(&rhs2, 1e-13).unwrap();
        let diff = u2
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(
            diff <= eps / lambda_min * 1.05,
            "shift {diff} above bound {}",
            eps / lambda_min
        );
    }

    #[test]
    fn rejects_bad_problems() {
        let mesh = radial_mesh(4, 24);
        // Negative q.
        assert!(RobinProblem::from_fns(
            &mesh,
            SourceTerm::Zero,
            |_| -0.5,
            |_| 1.0,
            |_| 0.0,
            |_| 1.0,
            1.0
        )
        .is_err());
        // q identically zero with no absorption.
        assert!(matches!(
            RobinProblem::from_fns(&mesh, SourceTerm::Zero, |_| 0.0, |_| 0.0, |_| 0.0, |_| 1.0, 1.0),
            Err(Error::Coercivity(_))
        ));
        // Cap exceeded.
        assert!(RobinProblem::from_fns(
            &mesh,
            SourceTerm::Zero,
            |_| 2.0,
            |_| 1.0,
            |_| 0.0,
            |_| 1.0,
            1.0
        )
        .is_err());
        // Zero q with absorption is fine.
        let q0 = BoundaryField::from_loop_fn(&mesh.s_loop, |_| 0.0);
        let qg = BoundaryField::from_loop_fn(&mesh.gamma_loop, |_| 0.0);
        let fs = BoundaryField::from_loop_fn(&mesh.s_loop, |_| 0.0);
        let fg = BoundaryField::from_loop_fn(&mesh.gamma_loop, |_| 1.0);
        assert!(RobinProblem::new(SourceTerm::Zero, q0, qg, fs, fg, 0.5, 1.0).is_ok());
    }

    #[test]
    fn absorption_term_enters_the_form() {
        let mesh = radial_mesh(6, 30);
        let q0 = BoundaryField::from_loop_fn(&mesh.s_loop, |_| 0.0);
        let qg = BoundaryField::from_loop_fn(&mesh.gamma_loop, |_| 0.0);
        let fs = BoundaryField::from_loop_fn(&mesh.s_loop, |_| 0.0);
        let fg = BoundaryField::from_loop_fn(&mesh.gamma_loop, |_| 1.0);
        let problem = RobinProblem::new(SourceTerm::Zero, q0, qg, fs, fg, 1.0, 1.0).unwrap();
        let sol = solve_forward(&problem, &mesh, &MetricTensor::Identity, 1e-12).unwrap();
        // -Delta u + u = 0 with pure flux data has a nontrivial solution;
        // the energy identity still holds.
        assert!(sol.energy > 0.0);
        let system = assemble(&problem, &mesh, &MetricTensor::Identity).unwrap();
        let lw = dot(&system.rhs, &sol.nodal);
        assert!((sol.energy - lw).abs() <= 1e-10 * lw.abs());
    }
}
