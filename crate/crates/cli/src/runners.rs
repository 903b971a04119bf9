//! Experiment drivers behind the CLI subcommands. Each runner checks that
//! the output directory is writable before solving anything, then emits a
//! fixed set of CSV/SVG artifacts. Outputs are deterministic: the same
//! config and seed reproduce every file byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use robinlab::boundary::{BoundaryField, CauchyData};
use robinlab::curve::{AnnularDomain, TWO_PI};
use robinlab::error::{Error, Result};
use robinlab::fem::{extract_cauchy, solve_forward, RobinProblem, SourceTerm};
use robinlab::inverse::{
    add_noise, assemble_forward_map, invert_flux, invert_robin, ForwardMapMatrix, InversionResult,
    MapBackend, MapSetup, NormConvention, RobinSetup,
};
use robinlab::mesh::{boundary_normals, build_annular_mesh, Mesh};
use robinlab::metric::MetricTensor;
use robinlab::report::{
    read_cauchy_csv, write_audits_csv, write_cauchy_csv, write_estimate_csv, write_fit_csv,
    write_iterations_csv, write_modulus_svg, write_solution_csv, write_sweep_csv, write_sweep_svg,
    write_text,
};
use robinlab::spectral::CircleProblem;
use robinlab::stability::{
    circle_family_triples, energy_estimate_audit, fit_decay_rate, lipschitz_check,
    max_principle_audit, sigma_min_sweep, sup_bound_audit, verify_log_modulus, StabilityReport,
    StabilityTriple, SweepGrid,
};

use crate::config::{ExperimentConfig, FieldSpec};

/// Create the directory and prove it is writable before any solve starts,
/// so a permissions problem cannot waste minutes of computation.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::InvalidArgument(format!("output dir {}: {e}", dir.display())))?;
    let probe = dir.join(".write_probe");
    std::fs::write(&probe, b"ok")
        .map_err(|e| Error::InvalidArgument(format!("output dir {}: not writable: {e}", dir.display())))?;
    let _ = std::fs::remove_file(&probe);
    Ok(())
}

/// Geometry, metric, and a mesh at the requested resolution, boundary
/// normals included.
pub struct Scene {
    pub domain: AnnularDomain,
    pub metric: MetricTensor,
    pub mesh: Mesh,
}

pub fn build_scene(cfg: &ExperimentConfig, n_radial: usize, n_angular: usize) -> Result<Scene> {
    let domain = cfg.geometry.domain()?;
    let metric = cfg.metric.metric()?;
    let mesh = build_annular_mesh(&domain, n_radial, n_angular)?;
    let mesh = boundary_normals(mesh, &metric)?;
    Ok(Scene { domain, metric, mesh })
}

fn base_scene(cfg: &ExperimentConfig) -> Result<Scene> {
    build_scene(cfg, cfg.discretization.n_radial, cfg.discretization.n_angular)
}

fn source_term(value: f64) -> SourceTerm {
    if value == 0.0 {
        SourceTerm::Zero
    } else {
        SourceTerm::Constant(value)
    }
}

fn sample(spec: &FieldSpec, lp: &robinlab::mesh::BoundaryLoop) -> BoundaryField {
    BoundaryField::from_loop_fn(lp, |t| spec.eval(t))
}

/// The configured boundary-value problem sampled on a mesh.
pub fn build_problem(cfg: &ExperimentConfig, mesh: &Mesh) -> Result<RobinProblem> {
    let p = &cfg.problem;
    RobinProblem::new(
        source_term(p.source),
        sample(&p.q_s, &mesh.s_loop),
        sample(&p.q_gamma, &mesh.gamma_loop),
        sample(&p.flux_s, &mesh.s_loop),
        sample(&p.flux_gamma, &mesh.gamma_loop),
        p.absorption,
        p.kappa,
    )
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn summary_csv(rows: &[(String, String)]) -> String {
    let mut out = String::from("name,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

/// Solve the configured problem on each refinement level, write the finest
/// solution and its Cauchy data, and when more than one level ran, a
/// convergence table of outer-trace distances to the finest level.
pub fn run_forward(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out = &cfg.output.dir;
    ensure_writable(out)?;

    let d = &cfg.discretization;
    let mut levels = Vec::new();
    for k in 0..d.refinement_levels {
        let scene = build_scene(cfg, d.n_radial << k, d.n_angular << k)?;
        let problem = build_problem(cfg, &scene.mesh)?;
        let solution = solve_forward(&problem, &scene.mesh, &scene.metric, d.tol)?;
        levels.push((scene, problem, solution));
    }

    let (finest_scene, finest_problem, finest_solution) = levels.last().unwrap();
    let mut written = Vec::new();

    let path = out.join("solution.csv");
    write_solution_csv(&path, &finest_scene.mesh, &finest_solution.nodal)?;
    written.push(path);

    let cauchy = extract_cauchy(finest_solution, finest_problem)?;
    let path = out.join("cauchy.csv");
    write_cauchy_csv(&path, &cauchy)?;
    written.push(path);

    if levels.len() > 1 {
        let target = &finest_scene.mesh.gamma_loop;
        let reference = &finest_solution.trace_gamma;
        let mut deltas = Vec::new();
        for (scene, _, solution) in &levels[..levels.len() - 1] {
            let moved = solution.trace_gamma.resample(target)?;
            deltas.push((scene, moved.sub(reference)?.l2_norm()));
        }
        let mut csv = String::from("level,n_radial,n_angular,h,trace_delta,observed_order\n");
        for (k, (scene, delta)) in deltas.iter().enumerate() {
            let order = if k > 0 && *delta > 0.0 {
                num((deltas[k - 1].1 / delta).log2())
            } else {
                String::new()
            };
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{order}",
                k,
                d.n_radial << k,
                d.n_angular << k,
                num(scene.mesh.h),
                num(*delta),
            );
        }
        let path = out.join("convergence.csv");
        write_text(&path, &csv)?;
        written.push(path);
    }
    Ok(written)
}

/// Cauchy data for an inversion: measured from a file, or synthesized from
/// the configured truth on a deliberately different mesh, with optional
/// noise.
fn obtain_data(
    cfg: &ExperimentConfig,
    scene: &Scene,
    truth_is_q: bool,
) -> Result<(CauchyData, Option<BoundaryField>)> {
    let inv = &cfg.inversion;
    if let Some(path) = &inv.data_file {
        let data = read_cauchy_csv(path, &scene.mesh.gamma_loop)?;
        return Ok((data, None));
    }

    let truth = if truth_is_q { &inv.truth_q } else { &inv.truth_flux };
    let what = if truth_is_q { "truth_q" } else { "truth_flux" };
    let Some(truth) = truth else {
        return Err(Error::InvalidArgument(format!(
            "inversion: needs either data_file or {what}"
        )));
    };
    let d = &cfg.discretization;
    if inv.synth_n_radial == d.n_radial && inv.synth_n_angular == d.n_angular {
        return Err(Error::InvalidArgument(
            "inversion: synthesis mesh equals the inversion mesh (inverse crime)".into(),
        ));
    }

    let synth = build_scene(cfg, inv.synth_n_radial, inv.synth_n_angular)?;
    let p = &cfg.problem;
    let problem = if truth_is_q {
        RobinProblem::new(
            source_term(p.source),
            sample(truth, &synth.mesh.s_loop),
            sample(&p.q_gamma, &synth.mesh.gamma_loop),
            sample(&p.flux_s, &synth.mesh.s_loop),
            sample(&p.flux_gamma, &synth.mesh.gamma_loop),
            p.absorption,
            p.kappa,
        )?
    } else {
        RobinProblem::new(
            source_term(p.source),
            sample(&p.q_s, &synth.mesh.s_loop),
            sample(&p.q_gamma, &synth.mesh.gamma_loop),
            sample(truth, &synth.mesh.s_loop),
            sample(&p.flux_gamma, &synth.mesh.gamma_loop),
            p.absorption,
            p.kappa,
        )?
    };
    let solution = solve_forward(&problem, &synth.mesh, &synth.metric, d.tol)?;
    let cauchy = extract_cauchy(&solution, &problem)?;
    let mut data = cauchy.resample(&scene.mesh.gamma_loop)?;
    if cfg.experiment.noise_eps > 0.0 {
        data = add_noise(&data, cfg.experiment.noise_eps, cfg.experiment.seed)?;
    }
    let truth_on_s = sample(truth, &scene.mesh.s_loop);
    Ok((data, Some(truth_on_s)))
}

fn map_backend(cfg: &ExperimentConfig) -> MapBackend {
    match cfg.experiment.backend.as_str() {
        "spectral" => MapBackend::Spectral,
        _ => MapBackend::Fem,
    }
}

fn assemble_map(
    cfg: &ExperimentConfig,
    scene: &Scene,
    lambda: f64,
    convention: NormConvention,
) -> Result<ForwardMapMatrix> {
    let setup = MapSetup {
        domain: &scene.domain,
        mesh: &scene.mesh,
        metric: &scene.metric,
        q_s: sample(&cfg.problem.q_s, &scene.mesh.s_loop),
        q_gamma: sample(&cfg.problem.q_gamma, &scene.mesh.gamma_loop),
        backend: map_backend(cfg),
        convention,
        tol: cfg.discretization.tol,
    };
    assemble_forward_map(lambda, &setup)
}

fn write_inversion_outputs(
    out: &Path,
    result: &InversionResult,
    truth: Option<&BoundaryField>,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let path = out.join("estimate.csv");
    write_estimate_csv(&path, &result.estimate)?;
    written.push(path);

    let path = out.join("iterations.csv");
    write_iterations_csv(&path, &result.history)?;
    written.push(path);

    let mut rows = vec![
        ("residual".into(), num(result.residual)),
        ("sigma_min".into(), num(result.sigma_min)),
        ("iterations".into(), result.iterations.to_string()),
        ("converged".into(), result.converged.to_string()),
        ("clamp_contacts".into(), result.clamp_contacts.to_string()),
    ];
    if let Some(truth) = truth {
        let denom = truth.l2_norm();
        let err = result.estimate.sub(truth)?.l2_norm();
        let rel = if denom > 0.0 { err / denom } else { err };
        rows.push(("rel_l2_error".into(), num(rel)));
    }
    let path = out.join("summary.csv");
    write_text(&path, &summary_csv(&rows))?;
    written.push(path);
    Ok(written)
}

/// Measurement of the known background drive alone (source and outer
/// flux, no inner flux), solved on the inversion mesh. The flux-to-data
/// map is linear only after this affine part is removed.
fn background_cauchy(cfg: &ExperimentConfig, scene: &Scene) -> Result<CauchyData> {
    let p = &cfg.problem;
    let problem = RobinProblem::new(
        source_term(p.source),
        sample(&p.q_s, &scene.mesh.s_loop),
        sample(&p.q_gamma, &scene.mesh.gamma_loop),
        BoundaryField::zeros(&scene.mesh.s_loop),
        sample(&p.flux_gamma, &scene.mesh.gamma_loop),
        p.absorption,
        p.kappa,
    )?;
    let solution = solve_forward(&problem, &scene.mesh, &scene.metric, cfg.discretization.tol)?;
    extract_cauchy(&solution, &problem)
}

/// Linear flux inversion from Cauchy data over the band below lambda.
pub fn run_invert_flux(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out = &cfg.output.dir;
    ensure_writable(out)?;
    let scene = base_scene(cfg)?;
    let map = assemble_map(cfg, &scene, cfg.experiment.lambda, NormConvention::HHalf)?;
    let (data, truth) = obtain_data(cfg, &scene, false)?;
    let linear = data.sub(&background_cauchy(cfg, &scene)?)?;
    let result = invert_flux(&linear, &map, cfg.experiment.alpha)?;
    write_inversion_outputs(out, &result, truth.as_ref())
}

/// Fixed-point reconstruction of the Robin coefficient on the inner
/// boundary.
pub fn run_invert_robin(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out = &cfg.output.dir;
    ensure_writable(out)?;
    let scene = base_scene(cfg)?;
    let (data, truth) = obtain_data(cfg, &scene, true)?;
    let p = &cfg.problem;
    let setup = RobinSetup {
        domain: &scene.domain,
        mesh: &scene.mesh,
        metric: &scene.metric,
        source: source_term(p.source),
        flux_s: sample(&p.flux_s, &scene.mesh.s_loop),
        flux_gamma: sample(&p.flux_gamma, &scene.mesh.gamma_loop),
        q_gamma: sample(&p.q_gamma, &scene.mesh.gamma_loop),
        lambda: cfg.experiment.lambda,
        kappa: p.kappa,
        max_iterations: cfg.experiment.max_iterations,
        tol: cfg.discretization.tol,
        alpha: cfg.experiment.alpha,
    };
    let result = invert_robin(&data, &setup)?;
    write_inversion_outputs(out, &result, truth.as_ref())
}

/// Nominal inner radius: exact for circles, mean sampled radius otherwise.
fn nominal_inner_radius(domain: &AnnularDomain) -> f64 {
    if let Some((r0, _)) = domain.radii() {
        return r0;
    }
    let n = 256;
    (0..n)
        .map(|j| domain.inner.radius(TWO_PI * j as f64 / n as f64))
        .sum::<f64>()
        / n as f64
}

fn drive_is_comparable(cfg: &ExperimentConfig) -> bool {
    let p = &cfg.problem;
    let nonneg = |spec: &FieldSpec| {
        let lp = 512;
        (0..lp).all(|j| spec.eval(TWO_PI * j as f64 / lp as f64) >= 0.0)
    };
    let nonzero = p.source != 0.0 || !p.flux_s.is_zero() || !p.flux_gamma.is_zero();
    p.source >= 0.0 && nonneg(&p.flux_s) && nonneg(&p.flux_gamma) && nonzero
}

fn comparison_family(cfg: &ExperimentConfig, mesh: &Mesh) -> Result<Vec<RobinProblem>> {
    let p = &cfg.problem;
    let kappa = p.kappa;
    let coeffs: [Box<dyn Fn(f64) -> f64>; 3] = [
        Box::new(move |_| 0.2 * kappa),
        Box::new(move |_| kappa),
        Box::new(move |t: f64| 0.5 * kappa + 0.3 * kappa * (2.0 * t).cos()),
    ];
    coeffs
        .iter()
        .map(|q| {
            RobinProblem::new(
                source_term(p.source),
                BoundaryField::from_loop_fn(&mesh.s_loop, q),
                BoundaryField::from_loop_fn(&mesh.gamma_loop, q),
                sample(&p.flux_s, &mesh.s_loop),
                sample(&p.flux_gamma, &mesh.gamma_loop),
                p.absorption,
                kappa,
            )
        })
        .collect()
}

/// Index of the capped member within [`comparison_family`].
const KAPPA_INDEX: usize = 1;

/// The full stability battery: singular value sweep with decay fit,
/// log-modulus fit on the single-frequency family (circular domains with
/// constant coefficients only), sampled Lipschitz constant, and the energy,
/// maximum-principle, and sup-norm audits. Writes sweep/fit/audits CSVs and
/// the two SVG plots.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<(StabilityReport, Vec<PathBuf>)> {
    let out = &cfg.output.dir;
    ensure_writable(out)?;
    let scene = base_scene(cfg)?;
    let e = &cfg.experiment;
    let mut report = StabilityReport::default();
    let mut written = Vec::new();

    // Sweep: one map at the largest cutoff, then column-prefix singular
    // values. The margin keeps the top mode inside the band on circles and
    // absorbs basis-eigenvalue slack elsewhere.
    let max_order = *e.orders.last().unwrap();
    let r0 = nominal_inner_radius(&scene.domain);
    let margin = if scene.domain.radii().is_some() { 1.0 + 1e-6 } else { 1.05 };
    let lambda_max = (max_order.max(1) as f64 / r0).powi(2) * margin;
    let sweep_map = assemble_map(cfg, &scene, lambda_max, NormConvention::H1)?;
    report.sigma_table = sigma_min_sweep(&sweep_map, &SweepGrid::Orders(e.orders.clone()))?;
    report.decay_slope = if report.sigma_table.len() >= 4 {
        Some(fit_decay_rate(&report.sigma_table)?)
    } else {
        None
    };

    let path = out.join("sweep.csv");
    write_sweep_csv(&path, &report.sigma_table)?;
    written.push(path);
    let path = out.join("sweep.svg");
    write_sweep_svg(&path, &report.sigma_table)?;
    written.push(path);

    // Log-modulus fit needs the closed-form family: concentric circles and
    // constant coefficients.
    let mut triples: Vec<StabilityTriple> = Vec::new();
    if let Some((r0, r1)) = scene.domain.radii() {
        let constant = |spec: &FieldSpec| match spec {
            FieldSpec::Constant(c) => Some(*c),
            _ => None,
        };
        if let (Some(q_s), Some(q_gamma), true) = (
            constant(&cfg.problem.q_s),
            constant(&cfg.problem.q_gamma),
            scene.metric.is_euclidean(),
        ) {
            if q_s > 0.0 {
                let problem = CircleProblem::new(r0, r1, q_s, q_gamma)?;
                triples = circle_family_triples(
                    &problem,
                    &e.family_orders,
                    scene.mesh.s_loop.len(),
                    scene.mesh.gamma_loop.len(),
                )?;
                report.log_fit = Some(verify_log_modulus(&triples, e.eta, e.eta_diagnostic)?);
            }
        }
    }

    let path = out.join("fit.csv");
    write_fit_csv(&path, report.decay_slope, report.log_fit.as_ref())?;
    written.push(path);
    if let Some(fit) = &report.log_fit {
        let path = out.join("modulus.svg");
        write_modulus_svg(&path, fit, &triples)?;
        written.push(path);
    }

    // Lipschitz constant of the configured band.
    let band_map = assemble_map(cfg, &scene, e.lambda, NormConvention::H1)?;
    report.lipschitz = Some(lipschitz_check(
        &band_map,
        e.lambda.sqrt(),
        e.samples,
        e.seed,
    )?);

    // Comparison-based audits need a nonnegative, nonzero drive.
    if drive_is_comparable(cfg) {
        let d = &cfg.discretization;
        let fine = build_scene(cfg, d.n_radial * 3 / 2, d.n_angular * 3 / 2)?;
        let family = comparison_family(cfg, &scene.mesh)?;
        report.energy = Some(energy_estimate_audit(
            &family,
            (&scene.mesh, &scene.metric),
            (&fine.mesh, &fine.metric),
            d.tol,
        )?);
        report.max_principle = family
            .iter()
            .map(|p| max_principle_audit(p, &scene.mesh, &scene.metric, d.tol))
            .collect::<Result<Vec<_>>>()?;
        report.sup_bound = Some(sup_bound_audit(
            &family,
            KAPPA_INDEX,
            (&scene.mesh, &scene.metric),
            (&fine.mesh, &fine.metric),
            d.tol,
        )?);
    }

    let path = out.join("audits.csv");
    write_audits_csv(&path, &report)?;
    written.push(path);

    Ok((report, written))
}
