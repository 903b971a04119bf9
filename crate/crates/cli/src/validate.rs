//! Acceptance battery: ten self-contained checks with pinned tolerances,
//! shared by the `validate` subcommand and the acceptance test target.
//! Every check reports one pass/fail line; details carry the measured
//! numbers and stay deterministic so the written report is reproducible
//! byte for byte.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use robinlab::boundary::{
    cauchy_from_series, in_a_ratio, multiplication_probe, BoundaryField, EigenBasis,
};
use robinlab::curve::AnnularDomain;
use robinlab::error::{Error, Result};
use robinlab::fem::{
    assemble, extract_cauchy, l2_error, l2_norm, solve_forward, RobinProblem, SourceTerm,
};
use robinlab::inverse::{
    add_noise, assemble_forward_map_fem, assemble_forward_map_spectral, invert_flux, invert_robin,
    NormConvention, RobinSetup,
};
use robinlab::mesh::{boundary_normals, build_annular_mesh, BoundaryLoop, BoundaryTag, Mesh};
use robinlab::metric::MetricTensor;
use robinlab::report::write_text;
use robinlab::spectral::{spectral_forward, CircleProblem, FourierSeries};
use robinlab::stability::{
    circle_family_triples, fit_decay_rate, interpolation_check, max_principle_audit, s_grid,
    sigma_min_sweep, verify_log_modulus, PhiParams, SweepGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::ExperimentConfig;
use crate::runners::{run_forward, run_stability};

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub index: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} {:<22} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.index,
            self.name,
            self.detail
        )
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.3e}")
}

/// Canonical annulus between circles of radius 1 and 2 with the Euclidean
/// metric.
fn radial_scene(n_radial: usize, n_angular: usize) -> Result<(MetricTensor, Mesh)> {
    let domain = AnnularDomain::circles(1.0, 2.0)?;
    let metric = MetricTensor::Identity;
    let mesh = build_annular_mesh(&domain, n_radial, n_angular)?;
    let mesh = boundary_normals(mesh, &metric)?;
    Ok((metric, mesh))
}

/// The radial benchmark: q = 1 on both loops, unit flux on the outer
/// boundary, nothing else.
fn radial_problem(mesh: &Mesh) -> Result<RobinProblem> {
    RobinProblem::new(
        SourceTerm::Zero,
        BoundaryField::constant(&mesh.s_loop, 1.0),
        BoundaryField::constant(&mesh.gamma_loop, 1.0),
        BoundaryField::zeros(&mesh.s_loop),
        BoundaryField::constant(&mesh.gamma_loop, 1.0),
        0.0,
        1.0,
    )
}

/// Discrete energy identity: the bilinear form applied to the solution
/// must equal the work of the data against it to near machine precision.
pub fn criterion_1() -> Result<CriterionOutcome> {
    let (metric, mesh) = radial_scene(16, 96)?;
    let problem = radial_problem(&mesh)?;
    let system = assemble(&problem, &mesh, &metric)?;
    let u = system.solve(1e-12)?;
    let energy = system.matrix.quadratic_form(&u);
    let work: f64 = system.rhs.iter().zip(&u).map(|(b, x)| b * x).sum();
    let residual = (energy - work).abs() / work.abs();
    Ok(CriterionOutcome {
        index: 1,
        name: "energy_identity",
        pass: residual <= 1e-10,
        detail: format!("relative residual {} (limit 1.0e-10)", fmt(residual)),
    })
}

/// Finite elements against the separated radial solution: small error on
/// the finest mesh and second-order convergence across three refinements.
pub fn criterion_2() -> Result<CriterionOutcome> {
    let problem = CircleProblem::new(1.0, 2.0, 1.0, 1.0)?;
    let exact = spectral_forward(
        &problem,
        &FourierSeries::zero(),
        &FourierSeries::constant(1.0),
    )?;
    // quadrature points on polygonal boundary edges fall a hair outside
    // the exact annulus; clamp the radius before evaluating
    let field = move |x: f64, y: f64| {
        let r = (x * x + y * y).sqrt().clamp(1.0, 2.0);
        exact.field(r, y.atan2(x)).unwrap()
    };

    let mut errors = Vec::new();
    for (n_r, n_a) in [(13, 160), (26, 320), (52, 640)] {
        let (metric, mesh) = radial_scene(n_r, n_a)?;
        let fem = solve_forward(&radial_problem(&mesh)?, &mesh, &metric, 1e-12)?;
        let exact_nodal: Vec<f64> = mesh.vertices.iter().map(|v| field(v[0], v[1])).collect();
        let rel = l2_error(&mesh, &fem.nodal, &field) / l2_norm(&mesh, &exact_nodal);
        errors.push(rel);
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let finest_ok = errors[2] <= 1e-3;
    let orders_ok = orders.iter().all(|o| (o - 2.0).abs() <= 0.3);
    Ok(CriterionOutcome {
        index: 2,
        name: "forward_convergence",
        pass: finest_ok && orders_ok,
        detail: format!(
            "finest rel error {} (limit 1.0e-3); orders {} {} (2 +- 0.3)",
            fmt(errors[2]),
            fmt(orders[0]),
            fmt(orders[1])
        ),
    })
}

fn decay_slope_of(map: &robinlab::inverse::ForwardMapMatrix) -> Result<f64> {
    let rows = sigma_min_sweep(map, &SweepGrid::Orders((0..=12).collect()))?;
    fit_decay_rate(&rows)
}

/// The smallest singular value of the band-limited map decays like
/// (R0/R1)^N; the fitted slope must land near ln 2 for radii 1 and 2.
pub fn criterion_3() -> Result<CriterionOutcome> {
    let s_loop = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, 64);
    let gamma_loop = BoundaryLoop::uniform_circle(BoundaryTag::Gamma, 2.0, 64);
    let lambda_max = 144.0 * (1.0 + 1e-6);
    let spectral_map = assemble_forward_map_spectral(
        lambda_max,
        1.0,
        2.0,
        1.0,
        1.0,
        &s_loop,
        &gamma_loop,
        NormConvention::H1,
    )?;
    let slope_spectral = decay_slope_of(&spectral_map)?;

    let domain = AnnularDomain::circles(1.0, 2.0)?;
    let (metric, mesh) = radial_scene(52, 640)?;
    let fem_map = assemble_forward_map_fem(
        lambda_max,
        &domain,
        &mesh,
        &metric,
        &BoundaryField::constant(&mesh.s_loop, 1.0),
        &BoundaryField::constant(&mesh.gamma_loop, 1.0),
        NormConvention::H1,
        1e-12,
    )?;
    let slope_fem = decay_slope_of(&fem_map)?;

    let dev_spectral = (slope_spectral - LN2).abs() / LN2;
    let dev_fem = (slope_fem - LN2).abs() / LN2;
    Ok(CriterionOutcome {
        index: 3,
        name: "sigma_decay_rate",
        pass: dev_spectral <= 0.15 && dev_fem <= 0.25,
        detail: format!(
            "spectral slope {} (dev {}; limit 15%); fem slope {} (dev {}; limit 25%); ln2 {}",
            fmt(slope_spectral),
            fmt(dev_spectral),
            fmt(slope_fem),
            fmt(dev_fem),
            fmt(LN2)
        ),
    })
}

/// Band-limited flux inversion at cutoff 25: positive stability constant,
/// near-exact noiseless recovery, and noise amplification bounded by the
/// condition number.
pub fn criterion_4() -> Result<CriterionOutcome> {
    let n = 64;
    let s_loop = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, n);
    let gamma_loop = BoundaryLoop::uniform_circle(BoundaryTag::Gamma, 2.0, n);
    let map = assemble_forward_map_spectral(
        25.0,
        1.0,
        2.0,
        1.0,
        1.0,
        &s_loop,
        &gamma_loop,
        NormConvention::HHalf,
    )?;
    let sigma_min = map.sigma_min();
    let cond = map.cond();

    // truth inside the band: orders 0, 1, 2, 5 at radius 1
    let mut truth = FourierSeries::constant(0.3);
    truth.cos = vec![0.0, 1.0, 0.0, 0.0, 0.2];
    truth.sin = vec![-0.5];
    let problem = CircleProblem::new(1.0, 2.0, 1.0, 1.0)?;
    let solution = spectral_forward(&problem, &truth, &FourierSeries::zero())?;
    let data = cauchy_from_series(
        &solution.trace_series(2.0),
        &solution.conormal_gamma_via_robin(),
        &gamma_loop,
    )?;
    let truth_field = BoundaryField::from_series(&s_loop, &truth);
    let truth_norm = truth_field.l2_norm();

    let clean = invert_flux(&data, &map, 0.0)?;
    let err_clean = clean.estimate.sub(&truth_field)?.l2_norm() / truth_norm;

    let eps = 1e-3;
    let noisy_data = add_noise(&data, eps, 11)?;
    let noisy = invert_flux(&noisy_data, &map, 0.0)?;
    let err_noisy = noisy.estimate.sub(&truth_field)?.l2_norm() / truth_norm;
    let noise_limit = 10.0 * cond * eps;

    let pass = sigma_min > 0.0 && err_clean <= 1e-6 && err_noisy <= noise_limit;
    Ok(CriterionOutcome {
        index: 4,
        name: "flux_inversion",
        pass,
        detail: format!(
            "sigma_min {}; clean error {} (limit 1.0e-6); noisy error {} (limit {})",
            fmt(sigma_min),
            fmt(err_clean),
            fmt(err_noisy),
            fmt(noise_limit)
        ),
    })
}

/// Logarithmic modulus of continuity on the single-frequency family:
/// the fit passes, the constant is stable under truncation, and the fitted
/// pair survives the interpolation audit over three decades.
pub fn criterion_5() -> Result<CriterionOutcome> {
    let problem = CircleProblem::new(1.0, 2.0, 1.0, 1.0)?;
    let orders: Vec<usize> = (2..=12).collect();
    let triples = circle_family_triples(&problem, &orders, 64, 64)?;
    let fit = verify_log_modulus(&triples, 0.125, false)?;

    let params = PhiParams::new(0.125, fit.c)?;
    let checks = interpolation_check(&triples, &s_grid(), &params, fit.c_bold)?;
    let audit_ok = checks.iter().all(|row| row.iter().all(|&b| b));

    let trunc = fit.truncated_c.unwrap_or(f64::NAN);
    Ok(CriterionOutcome {
        index: 5,
        name: "log_modulus",
        pass: fit.pass && audit_ok,
        detail: format!(
            "constant {}; rate {}; truncated rate {} (stable within 20%); interpolation audit {}",
            fmt(fit.c_bold),
            fmt(fit.c),
            fmt(trunc),
            if audit_ok { "clean" } else { "violated" }
        ),
    })
}

/// Comparison with the capped coefficient: positivity of the capped
/// solution and nodal domination across the coefficient family.
pub fn criterion_6() -> Result<CriterionOutcome> {
    let (metric, mesh) = radial_scene(16, 96)?;
    let kappa = 1.0;
    let members: [Box<dyn Fn(f64) -> f64>; 3] = [
        Box::new(|_| 0.2),
        Box::new(|_| 1.0),
        Box::new(|t: f64| 0.5 + 0.3 * (2.0 * t).cos()),
    ];
    let mut detail = String::new();
    let mut pass = true;
    for (k, q) in members.iter().enumerate() {
        let problem = RobinProblem::new(
            SourceTerm::Zero,
            BoundaryField::from_loop_fn(&mesh.s_loop, q),
            BoundaryField::from_loop_fn(&mesh.gamma_loop, q),
            BoundaryField::zeros(&mesh.s_loop),
            BoundaryField::constant(&mesh.gamma_loop, 1.0),
            0.0,
            kappa,
        )?;
        let audit = max_principle_audit(&problem, &mesh, &metric, 1e-12)?;
        pass &= audit.pass;
        if k > 0 {
            detail.push_str("; ");
        }
        let _ = write!(
            detail,
            "member {k}: min u_q {} min u_kappa {} min v {}",
            fmt(audit.min_u_q),
            fmt(audit.min_u_kappa),
            fmt(audit.min_v)
        );
    }
    Ok(CriterionOutcome {
        index: 6,
        name: "maximum_principle",
        pass,
        detail,
    })
}

/// Full corrosion reconstruction from synthetic data solved on a finer
/// mesh: tight recovery noiseless, graceful degradation under 1% noise,
/// within the iteration and time budget.
pub fn criterion_7() -> Result<CriterionOutcome> {
    let started = Instant::now();
    let q_true = |t: f64| 0.5 + 0.3 * (2.0 * t).cos();

    let (synth_metric, synth_mesh) = radial_scene(32, 192)?;
    let synth_problem = RobinProblem::new(
        SourceTerm::Zero,
        BoundaryField::from_loop_fn(&synth_mesh.s_loop, q_true),
        BoundaryField::constant(&synth_mesh.gamma_loop, 1.0),
        BoundaryField::zeros(&synth_mesh.s_loop),
        BoundaryField::constant(&synth_mesh.gamma_loop, 1.0),
        0.0,
        1.0,
    )?;
    let synth = solve_forward(&synth_problem, &synth_mesh, &synth_metric, 1e-12)?;
    let cauchy = extract_cauchy(&synth, &synth_problem)?;

    let domain = AnnularDomain::circles(1.0, 2.0)?;
    let (metric, mesh) = radial_scene(16, 96)?;
    let data = cauchy.resample(&mesh.gamma_loop)?;
    let truth_field = BoundaryField::from_loop_fn(&mesh.s_loop, q_true);
    let truth_norm = truth_field.l2_norm();
    let setup = RobinSetup {
        domain: &domain,
        mesh: &mesh,
        metric: &metric,
        source: SourceTerm::Zero,
        flux_s: BoundaryField::zeros(&mesh.s_loop),
        flux_gamma: BoundaryField::constant(&mesh.gamma_loop, 1.0),
        q_gamma: BoundaryField::constant(&mesh.gamma_loop, 1.0),
        lambda: 4.0,
        kappa: 1.0,
        max_iterations: 20,
        tol: 1e-12,
        alpha: 0.0,
    };

    let clean = invert_robin(&data, &setup)?;
    let err_clean = clean.estimate.sub(&truth_field)?.l2_norm() / truth_norm;

    let noisy_data = add_noise(&data, 1e-2, 23)?;
    let noisy = invert_robin(&noisy_data, &setup)?;
    let err_noisy = noisy.estimate.sub(&truth_field)?.l2_norm() / truth_norm;

    let elapsed = started.elapsed().as_secs_f64();
    let pass = err_clean <= 0.05
        && err_noisy <= 0.15
        && clean.iterations <= 20
        && noisy.iterations <= 20
        && elapsed <= 300.0;
    Ok(CriterionOutcome {
        index: 7,
        name: "robin_reconstruction",
        pass,
        detail: format!(
            "clean error {} in {} iterations (limit 5%); noisy error {} in {} iterations (limit 15%); budget kept {}",
            fmt(err_clean),
            clean.iterations,
            fmt(err_noisy),
            noisy.iterations,
            elapsed <= 300.0
        ),
    })
}

/// Band elements obey the gradient-ratio cap that places the band inside
/// the constrained flux class.
pub fn criterion_8() -> Result<CriterionOutcome> {
    let mut worst_margin = f64::NEG_INFINITY;
    let mut pass = true;
    let mut detail = String::new();
    for (i, lambda) in [4.0_f64, 16.0, 25.0].into_iter().enumerate() {
        let k_max = lambda.sqrt().floor() as usize;
        let basis = EigenBasis::circle_analytic(BoundaryTag::S, 1.0, 64, 2 * k_max + 1)?;
        let bound = lambda.sqrt() + 1e-8;
        let mut rng = ChaCha8Rng::seed_from_u64(42 + i as u64);
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..50 {
            let coeffs: Vec<f64> = (0..basis.len())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let f = basis.synthesize(&coeffs)?;
            let ratio = in_a_ratio(&f)?;
            worst = worst.max(ratio);
            pass &= ratio <= bound;
        }
        worst_margin = worst_margin.max(worst - bound);
        if i > 0 {
            detail.push_str("; ");
        }
        let _ = write!(detail, "cutoff {lambda}: worst ratio {} (cap {})", fmt(worst), fmt(bound));
    }
    let _ = write!(detail, "; worst margin {}", fmt(worst_margin));
    Ok(CriterionOutcome {
        index: 8,
        name: "band_gradient_bound",
        pass,
        detail,
    })
}

/// Multiplying by a fixed smooth coefficient barely moves the fractional
/// operator norm when the band doubles; the bound is band-independent.
pub fn criterion_9() -> Result<CriterionOutcome> {
    let lp = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, 256);
    let q = BoundaryField::from_loop_fn(&lp, f64::cos);
    let basis = EigenBasis::circle_analytic(BoundaryTag::S, 1.0, 256, 131)?;
    let r32 = multiplication_probe(&q, &basis, 1024.0, 20, 5)?;
    let r64 = multiplication_probe(&q, &basis, 4096.0, 20, 5)?;
    let change = (r64.ratio_sup - r32.ratio_sup).abs() / r32.ratio_sup;
    let pass = change <= 0.10;
    Ok(CriterionOutcome {
        index: 9,
        name: "multiplier_stability",
        pass,
        detail: format!(
            "ratio at band 32: {}; at band 64: {}; change {} (limit 10%); leak {}",
            fmt(r32.ratio_sup),
            fmt(r64.ratio_sup),
            fmt(change),
            fmt(r32.leak_max.max(r64.leak_max))
        ),
    })
}

/// The canonical stability and forward runs, executed twice into separate
/// directories, must emit byte-identical files.
pub fn criterion_10(out_dir: &Path) -> Result<CriterionOutcome> {
    let mut emitted = Vec::new();
    for pass_name in ["pass1", "pass2"] {
        let mut cfg = ExperimentConfig::default();
        cfg.output.dir = out_dir.join(pass_name);
        let (_, mut files) = run_stability(&cfg)?;
        files.extend(run_forward(&cfg)?);
        emitted.push(files);
    }
    let [first, second] = <[_; 2]>::try_from(emitted).unwrap();
    if first.len() != second.len() {
        return Ok(CriterionOutcome {
            index: 10,
            name: "determinism",
            pass: false,
            detail: format!("pass1 wrote {} files; pass2 wrote {}", first.len(), second.len()),
        });
    }
    let mut mismatched = Vec::new();
    for (a, b) in first.iter().zip(&second) {
        let bytes_a = std::fs::read(a).map_err(|e| Error::Parse(format!("{}: {e}", a.display())))?;
        let bytes_b = std::fs::read(b).map_err(|e| Error::Parse(format!("{}: {e}", b.display())))?;
        if bytes_a != bytes_b {
            mismatched.push(a.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    let pass = mismatched.is_empty();
    Ok(CriterionOutcome {
        index: 10,
        name: "determinism",
        pass,
        detail: if pass {
            format!("{} files byte-identical across two runs", first.len())
        } else {
            format!("differing files: {}", mismatched.join(" "))
        },
    })
}

/// Run the whole battery in order and write the machine-readable report.
pub fn run_all(out_dir: &Path) -> Result<Vec<CriterionOutcome>> {
    crate::runners::ensure_writable(out_dir)?;
    let outcomes = vec![
        criterion_1()?,
        criterion_2()?,
        criterion_3()?,
        criterion_4()?,
        criterion_5()?,
        criterion_6()?,
        criterion_7()?,
        criterion_8()?,
        criterion_9()?,
        criterion_10(out_dir)?,
    ];
    let mut csv = String::from("index,name,pass,detail\n");
    for o in &outcomes {
        let _ = writeln!(csv, "{},{},{},\"{}\"", o.index, o.name, o.pass, o.detail);
    }
    write_text(&out_dir.join("validation.csv"), &csv)?;
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_line_format() {
        let o = CriterionOutcome {
            index: 3,
            name: "sigma_decay_rate",
            pass: true,
            detail: "slope 7.0e-1".into(),
        };
        let line = o.line();
        assert!(line.starts_with("[PASS] criterion  3 "));
        assert!(line.contains("sigma_decay_rate"));
        let o = CriterionOutcome { pass: false, ..o };
        assert!(o.line().starts_with("[FAIL]"));
    }
}
