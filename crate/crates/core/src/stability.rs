//! Empirical stability laboratory.
//!
//! Sweeps the singular values of the flux-to-data map, fits the exponential
//! decay rate, fits a logarithmic modulus of continuity to families of
//! stability triples, samples the band-limited Lipschitz constant, and runs
//! the comparison / energy / sup audits that back those fits.

use crate::boundary::{
    cauchy_from_series, in_a_ratio, sobolev_norm, BoundaryField, EigenBasis,
};
use crate::error::{Error, Result};
use crate::fem::{h1_norm, l2_error, solve_forward, RobinProblem, SourceTerm};
use crate::inverse::{ForwardMapMatrix, NormConvention};
use crate::mesh::{BoundaryLoop, BoundaryTag, Mesh};
use crate::metric::MetricTensor;
use crate::spectral::{spectral_forward, CircleProblem, FourierSeries, ModeKind};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Grid on which the exponent `c` of the modulus is searched.
pub const C_GRID_LO: f64 = 0.1;
pub const C_GRID_HI: f64 = 50.0;
pub const C_GRID_LEN: usize = 60;

/// Grid of interpolation parameters `s` on which fitted constants are
/// re-checked against the additive form of the estimate.
pub const S_GRID_LO: f64 = 1.0;
pub const S_GRID_HI: f64 = 1.0e3;
pub const S_GRID_LEN: usize = 60;

pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "geometric grid needs 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("geometric grid needs at least 2 points".into()));
    }
    let ratio = hi / lo;
    Ok((0..n)
        .map(|i| lo * ratio.powf(i as f64 / (n - 1) as f64))
        .collect())
}

pub fn c_grid() -> Vec<f64> {
    geometric_grid(C_GRID_LO, C_GRID_HI, C_GRID_LEN).unwrap()
}

pub fn s_grid() -> Vec<f64> {
    geometric_grid(S_GRID_LO, S_GRID_HI, S_GRID_LEN).unwrap()
}

/// Parameters of the modulus `phi(r) = 1/r` for `r <= e^c`, `(ln r)^{-eta}`
/// beyond. The strict constructor enforces the range `eta` must lie in for
/// the estimate to hold; the diagnostic one admits any exponent in (0, 1)
/// and records that it left the guaranteed range.
#[derive(Debug, Clone, Copy)]
pub struct PhiParams {
    pub eta: f64,
    pub c: f64,
    in_range: bool,
}

impl PhiParams {
    pub fn new(eta: f64, c: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 0.25) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "modulus exponent eta must lie in (0, 1/4), got {eta}"
            )));
        }
        Self::checked(eta, c, true)
    }

    /// Out-of-range exponents are allowed here so the machinery can be run
    /// as a diagnostic; `in_guarantee_range` reports whether the guarantee
    /// applies.
    pub fn diagnostic(eta: f64, c: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "modulus exponent eta must lie in (0, 1), got {eta}"
            )));
        }
        Self::checked(eta, c, eta < 0.25)
    }

    fn checked(eta: f64, c: f64, in_range: bool) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("modulus scale c must be positive, got {c}")));
        }
        Ok(PhiParams { eta, c, in_range })
    }

    pub fn with_c(&self, c: f64) -> Result<Self> {
        Self::checked(self.eta, c, self.in_range)
    }

    pub fn in_guarantee_range(&self) -> bool {
        self.in_range
    }
}

/// The modulus itself. Defined for positive arguments only; both branches
/// are nonincreasing and the switch sits exactly at `r = e^c`.
pub fn phi(params: &PhiParams, r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("phi needs a positive finite argument, got {r}")));
    }
    if r <= params.c.exp() {
        Ok(1.0 / r)
    } else {
        Ok(r.ln().powf(-params.eta))
    }
}

/// One row of a singular value sweep. `label` is the mode order (or raw
/// cutoff) the row was requested at; `lambda` the eigenvalue cutoff actually
/// applied. Smallest singular values are reported in both flux-space
/// conventions, the condition number in the domain (`H^1`) one.
#[derive(Debug, Clone, Copy)]
pub struct SigmaRow {
    pub label: f64,
    pub lambda: f64,
    pub columns: usize,
    pub sigma_h1: f64,
    pub sigma_l2: f64,
    pub cond_h1: f64,
}

/// How sweep rows are selected: by angular mode order (circular inner
/// boundary) or by an explicit eigenvalue cutoff grid.
#[derive(Debug, Clone)]
pub enum SweepGrid {
    Orders(Vec<usize>),
    Cutoffs(Vec<f64>),
}

fn extremal_singular_values(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.clone().svd(false, false).singular_values;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for s in sv.iter() {
        lo = lo.min(*s);
        hi = hi.max(*s);
    }
    (lo, hi)
}

/// Restrict an assembled map to leading column blocks and record the
/// smallest singular value of each block. Columns are ordered by eigenvalue,
/// so each cutoff keeps a prefix; enlarging the block can only shrink the
/// smallest singular value.
pub fn sigma_min_sweep(map: &ForwardMapMatrix, grid: &SweepGrid) -> Result<Vec<SigmaRow>> {
    let cutoffs: Vec<(f64, f64)> = match grid {
        SweepGrid::Orders(orders) => {
            if orders.is_empty() {
                return Err(Error::InvalidArgument("empty sweep grid".into()));
            }
            if map.basis.lambdas.len() < 2 {
                return Err(Error::InvalidArgument(
                    "order sweep needs a basis with at least the first nonconstant mode".into(),
                ));
            }
            // First nonconstant eigenvalue is (1/r0)^2 on a circle of
            // radius r0; discrete eigenvalues of order N stay below
            // N^2 lambda_1, so this cutoff keeps exactly the orders <= N.
            let lambda_1 = map.basis.lambdas[1];
            orders
                .iter()
                .map(|&n| (n as f64, (n * n) as f64 * lambda_1))
                .collect()
        }
        SweepGrid::Cutoffs(cuts) => {
            if cuts.is_empty() {
                return Err(Error::InvalidArgument("empty sweep grid".into()));
            }
            if cuts.iter().any(|c| *c < 0.0 || !c.is_finite()) {
                return Err(Error::InvalidArgument("sweep cutoffs must be finite and nonnegative".into()));
            }
            cuts.iter().map(|&c| (c, c)).collect()
        }
    };
    for w in cutoffs.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::InvalidArgument("sweep grid must be strictly increasing".into()));
        }
    }
    let last = cutoffs.last().unwrap().1;
    if last > map.lambda * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "sweep cutoff {last:.3e} exceeds the assembled band {:.3e}",
            map.lambda
        )));
    }

    let w_h1 = map.weighted(NormConvention::H1);
    let w_l2 = map.weighted(NormConvention::L2);
    let mut rows = Vec::with_capacity(cutoffs.len());
    for (label, cut) in cutoffs {
        let keep = map
            .basis
            .lambdas
            .iter()
            .take_while(|l| **l <= cut * (1.0 + 1e-12) + 1e-300)
            .count();
        if keep == 0 {
            return Err(Error::InvalidArgument(format!(
                "cutoff {cut:.3e} keeps no basis modes"
            )));
        }
        let (s_h1, hi_h1) = extremal_singular_values(&w_h1.columns(0, keep).into_owned());
        let (s_l2, _) = extremal_singular_values(&w_l2.columns(0, keep).into_owned());
        rows.push(SigmaRow {
            label,
            lambda: cut,
            columns: keep,
            sigma_h1: s_h1,
            sigma_l2: s_l2,
            cond_h1: hi_h1 / s_h1,
        });
    }
    Ok(rows)
}

/// Least squares slope of `-ln sigma_min` against the row label, restricted
/// to the upper half of the grid where the asymptotic decay has set in. Uses
/// the `L^2(S)` flux convention, the one whose singular values follow the
/// clean geometric law.
pub fn fit_decay_rate(table: &[SigmaRow]) -> Result<f64> {
    if table.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs at least 4 rows, got {}",
            table.len()
        )));
    }
    for row in table {
        if !(row.sigma_l2 > 0.0) || !row.sigma_l2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "decay fit needs positive singular values, got {:.3e} at label {}",
                row.sigma_l2, row.label
            )));
        }
    }
    let upper = &table[table.len() / 2..];
    let n = upper.len() as f64;
    let mean_x = upper.iter().map(|r| r.label).sum::<f64>() / n;
    let mean_y = upper.iter().map(|r| -r.sigma_l2.ln()).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for r in upper {
        let dx = r.label - mean_x;
        sxx += dx * dx;
        sxy += dx * (-r.sigma_l2.ln() - mean_y);
    }
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("decay fit needs distinct labels in the upper half".into()));
    }
    Ok(sxy / sxx)
}

/// One family member of a stability experiment: the weak norm the estimate
/// controls, the strong norm it is allowed to spend, and the measurement.
#[derive(Debug, Clone, Copy)]
pub struct StabilityTriple {
    pub weak: f64,
    pub strong: f64,
    pub data: f64,
}

impl StabilityTriple {
    fn validate(&self, index: usize) -> Result<()> {
        let ok = self.weak >= 0.0
            && self.weak.is_finite()
            && self.strong >= 0.0
            && self.strong.is_finite()
            && self.data >= 0.0
            && self.data.is_finite();
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "stability triple {index} has a negative or non-finite entry"
            )));
        }
        if self.weak > 0.0 && self.data == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "stability triple {index}: measurement vanished for a nonzero flux; \
                 this contradicts uniqueness and indicates a forward solver failure"
            )));
        }
        Ok(())
    }
}

/// Pointwise check of the additive interpolation form
/// `c_bold * weak <= exp(c s) * data + s^{-eta} * strong` over a grid of
/// interpolation parameters. Entry `[i][j]` answers it for member `i` at
/// `s_grid[j]`.
pub fn interpolation_check(
    triples: &[StabilityTriple],
    s_grid: &[f64],
    params: &PhiParams,
    c_bold: f64,
) -> Result<Vec<Vec<bool>>> {
    if triples.is_empty() || s_grid.is_empty() {
        return Err(Error::InvalidArgument("interpolation check needs members and a grid".into()));
    }
    if s_grid.iter().any(|s| *s < 1.0 || !s.is_finite()) {
        return Err(Error::InvalidArgument("interpolation parameters must be >= 1".into()));
    }
    if !(c_bold > 0.0) || !c_bold.is_finite() {
        return Err(Error::InvalidArgument(format!("constant must be positive, got {c_bold}")));
    }
    for (i, t) in triples.iter().enumerate() {
        t.validate(i)?;
    }
    let mut table = Vec::with_capacity(triples.len());
    for t in triples {
        let lhs = c_bold * t.weak;
        let row = s_grid
            .iter()
            .map(|&s| {
                // exp(c s) can overflow; keep 0 * inf from poisoning the bound
                let grown = if t.data == 0.0 { 0.0 } else { (params.c * s).exp() * t.data };
                let rhs = grown + s.powf(-params.eta) * t.strong;
                lhs <= rhs * (1.0 + 1e-12) + 1e-300
            })
            .collect();
        table.push(row);
    }
    Ok(table)
}

/// Result of fitting the logarithmic modulus to a family.
#[derive(Debug, Clone)]
pub struct LogModulusFit {
    pub c_bold: f64,
    pub c: f64,
    pub eta: f64,
    pub in_guarantee_range: bool,
    /// Member whose triple determined the constant.
    pub binding_member: usize,
    /// Refit value of `c` after dropping the last four members, when the
    /// family is large enough for that comparison.
    pub truncated_c: Option<f64>,
    pub pass: bool,
}

/// Largest constant making `c_bold * weak <= phi(strong/data) * strong`
/// hold across the family at a fixed `c`, together with the member that
/// attains it. Zero-flux members never bind.
fn family_constant(triples: &[StabilityTriple], params: &PhiParams) -> Result<(f64, usize)> {
    let mut best = f64::INFINITY;
    let mut who = 0;
    for (i, t) in triples.iter().enumerate() {
        if t.weak == 0.0 {
            continue;
        }
        let g = phi(params, t.strong / t.data)? * t.strong / t.weak;
        if g < best {
            best = g;
            who = i;
        }
    }
    if !best.is_finite() {
        return Err(Error::InvalidArgument(
            "log modulus fit needs at least one member with a nonzero flux".into(),
        ));
    }
    Ok((best, who))
}

fn fit_over_grid(
    triples: &[StabilityTriple],
    eta: f64,
    diagnostic: bool,
    grid: &[f64],
) -> Result<Option<(f64, f64, usize)>> {
    let sg = s_grid();
    for &c in grid {
        let params = if diagnostic {
            PhiParams::diagnostic(eta, c)?
        } else {
            PhiParams::new(eta, c)?
        };
        let (c_bold, who) = family_constant(triples, &params)?;
        if !(c_bold > 0.0) {
            continue;
        }
        let table = interpolation_check(triples, &sg, &params, c_bold)?;
        if table.iter().all(|row| row.iter().all(|&b| b)) {
            return Ok(Some((c_bold, c, who)));
        }
    }
    Ok(None)
}

/// Fit the modulus constants to a family of triples and judge the fit.
///
/// `c` is searched on a fixed geometric grid, smallest admissible value
/// first; for each candidate the constant is the closed-form family minimum
/// and admissibility means the additive form of the estimate survives the
/// interpolation grid. The verdict additionally demands the fitted `c` be
/// stable (within 20%) when the last four members are dropped; families too
/// small for that comparison pass on admissibility alone.
pub fn verify_log_modulus(
    triples: &[StabilityTriple],
    eta: f64,
    diagnostic: bool,
) -> Result<LogModulusFit> {
    if triples.is_empty() {
        return Err(Error::InvalidArgument("log modulus fit needs a nonempty family".into()));
    }
    for (i, t) in triples.iter().enumerate() {
        t.validate(i)?;
    }
    // Validates eta eagerly so bad exponents fail loudly even if the grid
    // search would never construct params.
    let probe = if diagnostic {
        PhiParams::diagnostic(eta, 1.0)?
    } else {
        PhiParams::new(eta, 1.0)?
    };
    let grid = c_grid();
    let fitted = fit_over_grid(triples, eta, diagnostic, &grid)?;
    let Some((c_bold, c, who)) = fitted else {
        return Ok(LogModulusFit {
            c_bold: f64::NAN,
            c: f64::NAN,
            eta,
            in_guarantee_range: probe.in_guarantee_range(),
            binding_member: 0,
            truncated_c: None,
            pass: false,
        });
    };
    let mut truncated_c = None;
    let mut stable = true;
    if triples.len() > 5 {
        let head = &triples[..triples.len() - 4];
        if let Some((_, ct, _)) = fit_over_grid(head, eta, diagnostic, &grid)? {
            truncated_c = Some(ct);
            stable = (ct - c).abs() <= 0.20 * c;
        } else {
            stable = false;
        }
    }
    Ok(LogModulusFit {
        c_bold,
        c,
        eta,
        in_guarantee_range: probe.in_guarantee_range(),
        binding_member: who,
        truncated_c,
        pass: stable,
    })
}

/// Triples for the canonical family of single-frequency fluxes
/// `cos(N theta)` on a circular inner boundary, measured spectrally.
pub fn circle_family_triples(
    problem: &CircleProblem,
    orders: &[usize],
    n_s: usize,
    n_gamma: usize,
) -> Result<Vec<StabilityTriple>> {
    if orders.is_empty() {
        return Err(Error::InvalidArgument("empty flux family".into()));
    }
    let max_order = *orders.iter().max().unwrap();
    let s_loop = BoundaryLoop::uniform_circle(BoundaryTag::S, problem.r0, n_s);
    let gamma_loop = BoundaryLoop::uniform_circle(BoundaryTag::Gamma, problem.r1, n_gamma);
    let basis = EigenBasis::circle_analytic(BoundaryTag::S, problem.r0, n_s, 2 * max_order + 1)?;
    let zero = FourierSeries::zero();
    let mut triples = Vec::with_capacity(orders.len());
    for &n in orders {
        let flux = FourierSeries::mode(n, ModeKind::Cos, 1.0);
        let weak = flux.l2_norm_on_circle(problem.r0);
        let field = BoundaryField::from_series(&s_loop, &flux);
        let strong = sobolev_norm(&field, 0.5, &basis)?;
        let sol = spectral_forward(problem, &flux, &zero)?;
        let cauchy = cauchy_from_series(
            &sol.trace_series(problem.r1),
            &sol.conormal_gamma_via_robin(),
            &gamma_loop,
        )?;
        triples.push(StabilityTriple {
            weak,
            strong,
            data: cauchy.cauchy_c(),
        });
    }
    Ok(triples)
}

/// Triples echoing the coefficient estimate: for perturbations `p` of a
/// constant Robin coefficient, pair `||p||_{L^2(S)}` with the measurement
/// gap between the perturbed and unperturbed solutions. The strong slot is
/// pinned to 1 since the coefficient family is uniformly bounded.
pub fn corrosion_echo_triples(
    mesh: &Mesh,
    metric: &MetricTensor,
    base_q: f64,
    perturbations: &[BoundaryField],
    kappa: f64,
    tol: f64,
) -> Result<Vec<StabilityTriple>> {
    if perturbations.is_empty() {
        return Err(Error::InvalidArgument("empty perturbation family".into()));
    }
    let q_gamma = BoundaryField::constant(&mesh.gamma_loop, base_q);
    let flux_s = BoundaryField::zeros(&mesh.s_loop);
    let flux_gamma = BoundaryField::constant(&mesh.gamma_loop, 1.0);
    let base = RobinProblem::new(
        SourceTerm::Zero,
        BoundaryField::constant(&mesh.s_loop, base_q),
        q_gamma.clone(),
        flux_s.clone(),
        flux_gamma.clone(),
        0.0,
        kappa,
    )?;
    let u1 = solve_forward(&base, mesh, metric, tol)?;
    let c1 = crate::fem::extract_cauchy(&u1, &base)?;
    let mut triples = Vec::with_capacity(perturbations.len());
    for p in perturbations {
        let mut q2 = BoundaryField::constant(&mesh.s_loop, base_q);
        for (v, dv) in q2.values.iter_mut().zip(&p.values) {
            *v += dv;
        }
        let perturbed = RobinProblem::new(
            SourceTerm::Zero,
            q2,
            q_gamma.clone(),
            flux_s.clone(),
            flux_gamma.clone(),
            0.0,
            kappa,
        )?;
        let u2 = solve_forward(&perturbed, mesh, metric, tol)?;
        let c2 = crate::fem::extract_cauchy(&u2, &perturbed)?;
        triples.push(StabilityTriple {
            weak: p.l2_norm(),
            strong: 1.0,
            data: c1.sub(&c2)?.cauchy_c(),
        });
    }
    Ok(triples)
}

/// Outcome of sampling the band-limited stability constant.
#[derive(Debug, Clone)]
pub struct LipschitzCheck {
    /// Smallest sampled ratio of measurement to flux `H^1(S)` norm.
    pub c_emp: f64,
    /// Variational value from the weighted map.
    pub sigma_min: f64,
    pub samples: usize,
    pub rejected: usize,
    pub pass: bool,
}

/// Sample `||data|| / ||flux||_{H^1(S)}` over random band elements plus the
/// minimizing direction itself, rejecting draws whose fractional-norm ratio
/// exceeds the band bound. The minimum must reproduce the smallest singular
/// value of the weighted map: it is included as a sample, and no sample can
/// fall below it.
pub fn lipschitz_check(
    map: &ForwardMapMatrix,
    m_bound: f64,
    samples: usize,
    seed: u64,
) -> Result<LipschitzCheck> {
    if samples == 0 {
        return Err(Error::InvalidArgument("lipschitz check needs at least one sample".into()));
    }
    if !(m_bound > 0.0) || !m_bound.is_finite() {
        return Err(Error::InvalidArgument(format!("band bound must be positive, got {m_bound}")));
    }
    let m = map.n_columns();
    let weighted = map.weighted(NormConvention::H1);
    let svd = weighted.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().unwrap();
    let mut idx = 0;
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s < svd.singular_values[idx] {
            idx = k;
        }
    }
    let sigma_min = svd.singular_values[idx];

    let ratio_of = |z: &DVector<f64>| -> f64 { (&weighted * z).norm() / z.norm() };

    let mut c_emp = ratio_of(&v_t.row(idx).transpose());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejected = 0usize;
    let mut accepted = 0usize;
    while accepted < samples {
        if rejected > 10 * samples {
            return Err(Error::InvalidArgument(format!(
                "band bound {m_bound} rejected more than ten draws per sample"
            )));
        }
        let z = DVector::<f64>::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        if z.norm() == 0.0 {
            rejected += 1;
            continue;
        }
        // z lives in H^1-weighted coordinates; undo the weighting to get
        // flux coefficients for the band-bound test.
        let coeffs: Vec<f64> = z
            .iter()
            .zip(&map.basis.lambdas)
            .map(|(zi, l)| zi / (1.0 + l).sqrt())
            .collect();
        let field = map.basis.synthesize(&coeffs)?;
        if in_a_ratio(&field)? > m_bound + 1e-8 {
            rejected += 1;
            continue;
        }
        c_emp = c_emp.min(ratio_of(&z));
        accepted += 1;
    }
    let pass = c_emp >= 0.99 * sigma_min && (c_emp - sigma_min).abs() <= 0.01 * sigma_min;
    Ok(LipschitzCheck {
        c_emp,
        sigma_min,
        samples,
        rejected,
        pass,
    })
}

fn check_comparison_drive(problem: &RobinProblem, mesh: &Mesh) -> Result<()> {
    if problem.flux_s.values.iter().chain(&problem.flux_gamma.values).any(|v| *v < 0.0) {
        return Err(Error::InvalidArgument(
            "comparison audit needs nonnegative boundary fluxes".into(),
        ));
    }
    let source_min = match &problem.source {
        SourceTerm::Zero => 0.0,
        SourceTerm::Constant(c) => *c,
        SourceTerm::Func(f) => mesh
            .vertices
            .iter()
            .map(|v| f(v[0], v[1]))
            .fold(f64::INFINITY, f64::min),
    };
    if source_min < 0.0 {
        return Err(Error::InvalidArgument(
            "comparison audit needs a nonnegative source".into(),
        ));
    }
    let flux_max = problem
        .flux_s
        .values
        .iter()
        .chain(&problem.flux_gamma.values)
        .fold(0.0_f64, |m, v| m.max(*v));
    let source_max = match &problem.source {
        SourceTerm::Zero => 0.0,
        SourceTerm::Constant(c) => *c,
        SourceTerm::Func(f) => mesh
            .vertices
            .iter()
            .map(|v| f(v[0], v[1]))
            .fold(0.0_f64, f64::max),
    };
    if flux_max <= 0.0 && source_max <= 0.0 {
        return Err(Error::InvalidArgument(
            "comparison audit needs a nonzero nonnegative drive".into(),
        ));
    }
    Ok(())
}

/// Nodal check of the comparison principle against the capped-coefficient
/// reference solution.
#[derive(Debug, Clone)]
pub struct MaxPrincipleAudit {
    pub min_u_q: f64,
    pub min_u_kappa: f64,
    /// Smallest nodal value of `u_q - u_kappa`.
    pub min_v: f64,
    pub pass: bool,
}

/// Solve the given problem and the same problem with the coefficient
/// replaced by its cap on both boundary components, then compare nodally.
/// Requires a nonnegative, nonzero drive.
pub fn max_principle_audit(
    problem: &RobinProblem,
    mesh: &Mesh,
    metric: &MetricTensor,
    tol: f64,
) -> Result<MaxPrincipleAudit> {
    check_comparison_drive(problem, mesh)?;
    let u_q = solve_forward(problem, mesh, metric, tol)?;
    let capped = RobinProblem::new(
        problem.source.clone(),
        BoundaryField::constant(&mesh.s_loop, problem.kappa),
        BoundaryField::constant(&mesh.gamma_loop, problem.kappa),
        problem.flux_s.clone(),
        problem.flux_gamma.clone(),
        problem.absorption,
        problem.kappa,
    )?;
    let u_k = solve_forward(&capped, mesh, metric, tol)?;
    let min_u_q = u_q.nodal.iter().copied().fold(f64::INFINITY, f64::min);
    let min_u_kappa = u_k.nodal.iter().copied().fold(f64::INFINITY, f64::min);
    let min_v = u_q
        .nodal
        .iter()
        .zip(&u_k.nodal)
        .map(|(a, b)| a - b)
        .fold(f64::INFINITY, f64::min);
    let pass = min_u_kappa > 0.0 && min_u_q >= min_u_kappa - 1e-8 && min_v >= -1e-8;
    Ok(MaxPrincipleAudit {
        min_u_q,
        min_u_kappa,
        min_v,
        pass,
    })
}

fn source_l2(problem: &RobinProblem, mesh: &Mesh) -> f64 {
    match &problem.source {
        SourceTerm::Zero => 0.0,
        SourceTerm::Constant(c) => {
            let vol: f64 = mesh.tri_weights.iter().sum();
            c.abs() * vol.sqrt()
        }
        SourceTerm::Func(f) => {
            let zeros = vec![0.0; mesh.vertices.len()];
            l2_error(mesh, &zeros, |x, y| f(x, y))
        }
    }
}

fn resample_problem(problem: &RobinProblem, target: &Mesh) -> Result<RobinProblem> {
    RobinProblem::new(
        problem.source.clone(),
        problem.q_s.resample(&target.s_loop)?,
        problem.q_gamma.resample(&target.gamma_loop)?,
        problem.flux_s.resample(&target.s_loop)?,
        problem.flux_gamma.resample(&target.gamma_loop)?,
        problem.absorption,
        problem.kappa,
    )
}

fn data_size(problem: &RobinProblem, mesh: &Mesh) -> f64 {
    let fs = problem.flux_s.l2_norm();
    let fg = problem.flux_gamma.l2_norm();
    source_l2(problem, mesh) + (fs * fs + fg * fg).sqrt()
}

/// Solution size against data size for one problem:
/// `||u||_{H^1(D)} / (||f||_{L^2(D)} + ||a||_{L^2(boundary)})`.
pub fn energy_ratio(
    problem: &RobinProblem,
    mesh: &Mesh,
    metric: &MetricTensor,
    tol: f64,
) -> Result<f64> {
    let den = data_size(problem, mesh);
    if den == 0.0 {
        return Err(Error::InvalidArgument("energy ratio is undefined for zero data".into()));
    }
    let sol = solve_forward(problem, mesh, metric, tol)?;
    Ok(h1_norm(mesh, metric, &sol.nodal) / den)
}

/// Worst-case energy ratio over a batch, re-measured after one mesh
/// refinement.
#[derive(Debug, Clone)]
pub struct EnergyAudit {
    pub worst_ratio: f64,
    pub refined_ratio: f64,
    pub pass: bool,
}

/// The batch lives on the coarse mesh; each member is resampled onto the
/// fine one for the stability comparison. Zero-data members are excluded
/// rather than rejected. Passes when the worst ratio moves by at most 10%
/// under refinement.
pub fn energy_estimate_audit(
    batch: &[RobinProblem],
    coarse: (&Mesh, &MetricTensor),
    fine: (&Mesh, &MetricTensor),
    tol: f64,
) -> Result<EnergyAudit> {
    let mut worst: f64 = 0.0;
    let mut refined: f64 = 0.0;
    let mut counted = 0usize;
    for problem in batch {
        if data_size(problem, coarse.0) == 0.0 {
            continue;
        }
        counted += 1;
        worst = worst.max(energy_ratio(problem, coarse.0, coarse.1, tol)?);
        let moved = resample_problem(problem, fine.0)?;
        refined = refined.max(energy_ratio(&moved, fine.0, fine.1, tol)?);
    }
    if counted == 0 {
        return Err(Error::InvalidArgument(
            "energy audit needs at least one member with nonzero data".into(),
        ));
    }
    let pass = (worst - refined).abs() <= 0.10 * worst;
    Ok(EnergyAudit {
        worst_ratio: worst,
        refined_ratio: refined,
        pass,
    })
}

/// Sup-norm audit across a coefficient family sharing one drive.
#[derive(Debug, Clone)]
pub struct SupAudit {
    pub member_sups: Vec<f64>,
    pub family_max: f64,
    pub refined_max: f64,
    pub kappa_sup: f64,
    /// Whether the capped member attains the smallest sup, as comparison
    /// demands.
    pub kappa_smallest: bool,
    pub pass: bool,
}

/// Solve every member, record nodal sups, and re-measure on a finer mesh.
/// `kappa_index` names the member whose coefficient equals the cap; it must
/// come out with the smallest sup, and the family-wide maximum must be
/// stable (within 10%) under the refinement.
pub fn sup_bound_audit(
    family: &[RobinProblem],
    kappa_index: usize,
    coarse: (&Mesh, &MetricTensor),
    fine: (&Mesh, &MetricTensor),
    tol: f64,
) -> Result<SupAudit> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("sup audit needs a nonempty family".into()));
    }
    if kappa_index >= family.len() {
        return Err(Error::InvalidArgument(format!(
            "capped member index {kappa_index} out of range for family of {}",
            family.len()
        )));
    }
    let kappa = family[kappa_index].kappa;
    let q_min = family[kappa_index]
        .q_s
        .values
        .iter()
        .chain(&family[kappa_index].q_gamma.values)
        .fold(f64::INFINITY, |m, v| m.min(*v));
    if q_min < kappa - 1e-12 {
        return Err(Error::InvalidArgument(
            "designated capped member does not have the cap as its coefficient".into(),
        ));
    }
    let mut member_sups = Vec::with_capacity(family.len());
    let mut refined_max: f64 = 0.0;
    for problem in family {
        check_comparison_drive(problem, coarse.0)?;
        let sol = solve_forward(problem, coarse.0, coarse.1, tol)?;
        member_sups.push(sol.nodal.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let moved = resample_problem(problem, fine.0)?;
        let fine_sol = solve_forward(&moved, fine.0, fine.1, tol)?;
        refined_max = refined_max.max(fine_sol.nodal.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    let family_max = member_sups.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kappa_sup = member_sups[kappa_index];
    let kappa_smallest = member_sups
        .iter()
        .enumerate()
        .all(|(i, s)| i == kappa_index || kappa_sup <= s + 1e-8);
    let pass = kappa_smallest && (family_max - refined_max).abs() <= 0.10 * family_max;
    Ok(SupAudit {
        member_sups,
        family_max,
        refined_max,
        kappa_sup,
        kappa_smallest,
        pass,
    })
}

/// Everything a stability run produces, bundled for reporting.
#[derive(Debug, Clone, Default)]
pub struct StabilityReport {
    pub sigma_table: Vec<SigmaRow>,
    pub decay_slope: Option<f64>,
    pub log_fit: Option<LogModulusFit>,
    pub lipschitz: Option<LipschitzCheck>,
    pub energy: Option<EnergyAudit>,
    pub max_principle: Vec<MaxPrincipleAudit>,
    pub sup_bound: Option<SupAudit>,
}

impl StabilityReport {
    /// One named verdict per component that actually ran.
    pub fn verdicts(&self) -> Vec<(String, bool)> {
        let mut v = Vec::new();
        if let Some(slope) = self.decay_slope {
            v.push(("sigma_decay".into(), slope.is_finite() && slope > 0.0));
        }
        if let Some(fit) = &self.log_fit {
            v.push(("log_modulus".into(), fit.pass));
        }
        if let Some(l) = &self.lipschitz {
            v.push(("lipschitz".into(), l.pass));
        }
        if let Some(e) = &self.energy {
            v.push(("energy_bound".into(), e.pass));
        }
        if !self.max_principle.is_empty() {
            v.push((
                "maximum_principle".into(),
                self.max_principle.iter().all(|a| a.pass),
            ));
        }
        if let Some(s) = &self.sup_bound {
            v.push(("sup_bound".into(), s.pass));
        }
        v
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts().iter().all(|(_, ok)| *ok)
    }
}
