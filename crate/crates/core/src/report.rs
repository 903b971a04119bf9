//! CSV and SVG emitters.
//!
//! Every float is written as `{:.16e}` so runs with identical inputs produce
//! byte-identical files. Schemas are fixed: `solution.csv` carries
//! `vertex,x,y,u`; Cauchy dumps carry `theta,trace,conormal,tangential_derivative`
//! ordered by angle; Fourier dumps `n,kind,coef` with kind `c` or `s`;
//! eigenbasis dumps `m,lambda` with the per-node mode matrix in a companion
//! file; inversion logs `iter,mismatch,update_norm,min_u_on_S` with the
//! estimate as `theta,value`; lab output goes to `sweep.csv`, `fit.csv`,
//! `audits.csv` and two hand-emitted SVG figures.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::boundary::{BoundaryField, CauchyData, EigenBasis};
use crate::error::{Error, Result};
use crate::inverse::IterationRecord;
use crate::mesh::{BoundaryLoop, Mesh};
use crate::spectral::{FourierSeries, ModeKind};
use crate::stability::{phi, LogModulusFit, PhiParams, SigmaRow, StabilityReport, StabilityTriple};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)?;
    Ok(())
}

/// Indices of a field's nodes sorted by angle, ties broken by index so the
/// order is total.
fn angle_order(angles: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..angles.len()).collect();
    idx.sort_by(|&a, &b| {
        angles[a]
            .partial_cmp(&angles[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

pub fn solution_csv(mesh: &Mesh, nodal: &[f64]) -> Result<String> {
    if nodal.len() != mesh.vertices.len() {
        return Err(Error::InvalidArgument(format!(
            "nodal field has {} entries for a mesh with {} vertices",
            nodal.len(),
            mesh.vertices.len()
        )));
    }
    let mut out = String::from("vertex,x,y,u\n");
    for (i, v) in mesh.vertices.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{}", num(v[0]), num(v[1]), num(nodal[i]));
    }
    Ok(out)
}

pub fn write_solution_csv(path: &Path, mesh: &Mesh, nodal: &[f64]) -> Result<()> {
    write_text(path, &solution_csv(mesh, nodal)?)
}

pub fn cauchy_csv(data: &CauchyData) -> String {
    let order = angle_order(&data.trace.angles);
    let mut out = String::from("theta,trace,conormal,tangential_derivative\n");
    for i in order {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            num(data.trace.angles[i]),
            num(data.trace.values[i]),
            num(data.conormal.values[i]),
            num(data.tangential.values[i]),
        );
    }
    out
}

pub fn write_cauchy_csv(path: &Path, data: &CauchyData) -> Result<()> {
    write_text(path, &cauchy_csv(data))
}

/// Read a Cauchy dump back onto a boundary loop. The file must cover the
/// loop's nodes: every angle in the loop has to appear (within 1e-9) in the
/// file. The tangential column is recomputed from the trace rather than
/// trusted, keeping the invariant between the two.
pub fn read_cauchy_csv(path: &Path, lp: &BoundaryLoop) -> Result<CauchyData> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("theta,trace,conormal,tangential_derivative") => {}
        other => {
            return Err(Error::Parse(format!(
                "bad cauchy header: {:?}",
                other.unwrap_or("<empty>")
            )))
        }
    }
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Parse(format!("cauchy row {} has {} columns", k + 2, cols.len())));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("cauchy row {}: {e}", k + 2)))
        };
        rows.push((parse(cols[0])?, parse(cols[1])?, parse(cols[2])?));
    }
    let mut trace = Vec::with_capacity(lp.len());
    let mut conormal = Vec::with_capacity(lp.len());
    for &angle in &lp.angles {
        let hit = rows
            .iter()
            .min_by(|a, b| {
                let da = (a.0 - angle).abs();
                let db = (b.0 - angle).abs();
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .filter(|r| (r.0 - angle).abs() <= 1e-9)
            .ok_or_else(|| {
                Error::BoundaryMismatch(format!("no cauchy row at angle {angle:.6}"))
            })?;
        trace.push(hit.1);
        conormal.push(hit.2);
    }
    CauchyData::from_trace_conormal(
        BoundaryField::from_values(lp, trace)?,
        BoundaryField::from_values(lp, conormal)?,
    )
}

pub fn fourier_csv(series: &FourierSeries) -> String {
    let mut out = String::from("n,kind,coef\n");
    let _ = writeln!(out, "0,c,{}", num(series.a0));
    for n in 1..=series.order() {
        let _ = writeln!(out, "{n},c,{}", num(series.coef(n, ModeKind::Cos)));
        let _ = writeln!(out, "{n},s,{}", num(series.coef(n, ModeKind::Sin)));
    }
    out
}

pub fn write_fourier_csv(path: &Path, series: &FourierSeries) -> Result<()> {
    write_text(path, &fourier_csv(series))
}

pub fn eigenbasis_csv(basis: &EigenBasis) -> String {
    let mut out = String::from("m,lambda\n");
    for (m, l) in basis.lambdas.iter().enumerate() {
        let _ = writeln!(out, "{m},{}", num(*l));
    }
    out
}

/// Per-node values of every mode, one angle-sorted row per boundary node.
pub fn eigenmodes_csv(basis: &EigenBasis) -> String {
    let mut header = String::from("theta");
    for m in 0..basis.lambdas.len() {
        let _ = write!(header, ",phi_{m}");
    }
    let mut out = header;
    out.push('\n');
    for i in angle_order(&basis.angles) {
        let _ = write!(out, "{}", num(basis.angles[i]));
        for m in 0..basis.lambdas.len() {
            let _ = write!(out, ",{}", num(basis.modes[(i, m)]));
        }
        out.push('\n');
    }
    out
}

pub fn write_eigenbasis_csv(path: &Path, modes_path: &Path, basis: &EigenBasis) -> Result<()> {
    write_text(path, &eigenbasis_csv(basis))?;
    write_text(modes_path, &eigenmodes_csv(basis))
}

pub fn iterations_csv(history: &[IterationRecord]) -> String {
    let mut out = String::from("iter,mismatch,update_norm,min_u_on_S\n");
    for rec in history {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            rec.iter,
            num(rec.mismatch),
            num(rec.update_norm),
            num(rec.min_u_on_s)
        );
    }
    out
}

pub fn write_iterations_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    write_text(path, &iterations_csv(history))
}

pub fn estimate_csv(field: &BoundaryField) -> String {
    let mut out = String::from("theta,value\n");
    for i in angle_order(&field.angles) {
        let _ = writeln!(out, "{},{}", num(field.angles[i]), num(field.values[i]));
    }
    out
}

pub fn write_estimate_csv(path: &Path, field: &BoundaryField) -> Result<()> {
    write_text(path, &estimate_csv(field))
}

pub fn sweep_csv(rows: &[SigmaRow]) -> String {
    let mut out = String::from("label,lambda,columns,sigma_min_h1,sigma_min_l2,cond_h1\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(r.label),
            num(r.lambda),
            r.columns,
            num(r.sigma_h1),
            num(r.sigma_l2),
            num(r.cond_h1)
        );
    }
    out
}

pub fn write_sweep_csv(path: &Path, rows: &[SigmaRow]) -> Result<()> {
    write_text(path, &sweep_csv(rows))
}

/// Fitted constants as `name,value` rows. A fit that could not run (too few
/// sweep rows, or no admissible constants) leaves a notice row instead of a
/// number.
pub fn fit_csv(decay_slope: Option<f64>, fit: Option<&LogModulusFit>) -> String {
    let mut out = String::from("name,value\n");
    match decay_slope {
        Some(s) => {
            let _ = writeln!(out, "decay_slope,{}", num(s));
        }
        None => out.push_str("decay_slope,skipped_needs_at_least_4_rows\n"),
    }
    match fit {
        Some(f) => {
            if f.c_bold.is_finite() {
                let _ = writeln!(out, "c_bold,{}", num(f.c_bold));
                let _ = writeln!(out, "c,{}", num(f.c));
            } else {
                out.push_str("c_bold,no_admissible_fit\n");
                out.push_str("c,no_admissible_fit\n");
            }
            let _ = writeln!(out, "eta,{}", num(f.eta));
            let _ = writeln!(out, "eta_in_guarantee_range,{}", f.in_guarantee_range);
            let _ = writeln!(out, "binding_member,{}", f.binding_member);
            match f.truncated_c {
                Some(ct) => {
                    let _ = writeln!(out, "truncated_c,{}", num(ct));
                }
                None => out.push_str("truncated_c,family_too_small\n"),
            }
            let _ = writeln!(out, "log_modulus_pass,{}", f.pass);
        }
        None => out.push_str("log_modulus,skipped\n"),
    }
    out
}

pub fn write_fit_csv(path: &Path, decay_slope: Option<f64>, fit: Option<&LogModulusFit>) -> Result<()> {
    write_text(path, &fit_csv(decay_slope, fit))
}

/// Audit values and verdicts as `audit,field,value` rows.
pub fn audits_csv(report: &StabilityReport) -> String {
    let mut out = String::from("audit,field,value\n");
    if let Some(l) = &report.lipschitz {
        let _ = writeln!(out, "lipschitz,c_emp,{}", num(l.c_emp));
        let _ = writeln!(out, "lipschitz,sigma_min,{}", num(l.sigma_min));
        let _ = writeln!(out, "lipschitz,samples,{}", l.samples);
        let _ = writeln!(out, "lipschitz,rejected,{}", l.rejected);
    }
    if let Some(e) = &report.energy {
        let _ = writeln!(out, "energy,worst_ratio,{}", num(e.worst_ratio));
        let _ = writeln!(out, "energy,refined_ratio,{}", num(e.refined_ratio));
    }
    for (i, a) in report.max_principle.iter().enumerate() {
        let _ = writeln!(out, "maximum_principle_{i},min_u_q,{}", num(a.min_u_q));
        let _ = writeln!(out, "maximum_principle_{i},min_u_kappa,{}", num(a.min_u_kappa));
        let _ = writeln!(out, "maximum_principle_{i},min_v,{}", num(a.min_v));
    }
    if let Some(s) = &report.sup_bound {
        for (i, sup) in s.member_sups.iter().enumerate() {
            let _ = writeln!(out, "sup_bound,member_{i},{}", num(*sup));
        }
        let _ = writeln!(out, "sup_bound,family_max,{}", num(s.family_max));
        let _ = writeln!(out, "sup_bound,refined_max,{}", num(s.refined_max));
        let _ = writeln!(out, "sup_bound,kappa_sup,{}", num(s.kappa_sup));
        let _ = writeln!(out, "sup_bound,kappa_smallest,{}", s.kappa_smallest);
    }
    for (name, ok) in report.verdicts() {
        let _ = writeln!(out, "verdict,{name},{}", if ok { "pass" } else { "fail" });
    }
    out
}

pub fn write_audits_csv(path: &Path, report: &StabilityReport) -> Result<()> {
    write_text(path, &audits_csv(report))
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

fn px(x: f64) -> String {
    format!("{x:.2}")
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_lo) / (self.x_hi - self.x_lo) * (SVG_W - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, y: f64) -> f64 {
        SVG_H - MARGIN_B - (y - self.y_lo) / (self.y_hi - self.y_lo) * (SVG_H - MARGIN_T - MARGIN_B)
    }
}

fn svg_open(title: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\" font-family=\"monospace\" font-size=\"12\">\n"
    );
    let _ = writeln!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>",
        px(SVG_W / 2.0)
    );
    s
}

fn svg_axes(s: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = px(MARGIN_L);
    let x1 = px(SVG_W - MARGIN_R);
    let y0 = px(SVG_H - MARGIN_B);
    let y1 = px(MARGIN_T);
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>",
        px((MARGIN_L + SVG_W - MARGIN_R) / 2.0),
        px(SVG_H - 12.0)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{y_label}</text>",
        px((MARGIN_T + SVG_H - MARGIN_B) / 2.0),
        px((MARGIN_T + SVG_H - MARGIN_B) / 2.0)
    );
    let _ = frame;
}

fn decade_ticks(s: &mut String, frame: &Frame) {
    let lo = frame.y_lo.ceil() as i64;
    let hi = frame.y_hi.floor() as i64;
    for d in lo..=hi {
        let y = px(frame.sy(d as f64));
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#cccccc\"/>",
            px(MARGIN_L),
            px(SVG_W - MARGIN_R)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\" dominant-baseline=\"middle\">1e{d}</text>",
            px(MARGIN_L - 6.0)
        );
    }
}

fn polyline(s: &mut String, pts: &[(f64, f64)], color: &str) {
    let mut attr = String::new();
    for (x, y) in pts {
        let _ = write!(attr, "{},{} ", px(*x), px(*y));
    }
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
        attr.trim_end()
    );
}

fn dots(s: &mut String, pts: &[(f64, f64)], color: &str) {
    for (x, y) in pts {
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>",
            px(*x),
            px(*y)
        );
    }
}

/// Singular value sweep on a log vertical axis, both flux-space conventions.
pub fn sweep_svg(rows: &[SigmaRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("sweep figure needs rows".into()));
    }
    if rows
        .iter()
        .any(|r| !(r.sigma_h1 > 0.0) || !(r.sigma_l2 > 0.0))
    {
        return Err(Error::InvalidArgument("sweep figure needs positive singular values".into()));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.label).collect();
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for r in rows {
        for v in [r.sigma_h1, r.sigma_l2] {
            y_lo = y_lo.min(v.log10());
            y_hi = y_hi.max(v.log10());
        }
    }
    if y_hi - y_lo < 1.0 {
        y_hi = y_lo + 1.0;
    }
    let frame = Frame {
        x_lo: xs[0],
        x_hi: xs[xs.len() - 1].max(xs[0] + 1.0),
        y_lo: y_lo - 0.2,
        y_hi: y_hi + 0.2,
    };
    let mut s = svg_open("smallest singular value vs mode order");
    svg_axes(&mut s, &frame, "mode order", "sigma_min (log)");
    decade_ticks(&mut s, &frame);
    for r in rows {
        let x = px(frame.sx(r.label));
        let _ = writeln!(
            s,
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            px(SVG_H - MARGIN_B + 16.0),
            r.label
        );
    }
    let h1: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (frame.sx(r.label), frame.sy(r.sigma_h1.log10())))
        .collect();
    let l2: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (frame.sx(r.label), frame.sy(r.sigma_l2.log10())))
        .collect();
    polyline(&mut s, &h1, "#1f5fa8");
    dots(&mut s, &h1, "#1f5fa8");
    polyline(&mut s, &l2, "#b03a2e");
    dots(&mut s, &l2, "#b03a2e");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" fill=\"#1f5fa8\">H1 flux norm</text>",
        px(MARGIN_L + 10.0),
        px(MARGIN_T + 16.0)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" fill=\"#b03a2e\">L2 flux norm</text>",
        px(MARGIN_L + 10.0),
        px(MARGIN_T + 32.0)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_sweep_svg(path: &Path, rows: &[SigmaRow]) -> Result<()> {
    write_text(path, &sweep_svg(rows)?)
}

/// The fitted modulus curve on log-log axes with one point per family
/// member. A member sits at `x = strong/data` with height
/// `c_bold * weak / strong`; the fit promises every point lies on or below
/// the curve.
pub fn modulus_svg(fit: &LogModulusFit, triples: &[StabilityTriple]) -> Result<String> {
    if triples.is_empty() {
        return Err(Error::InvalidArgument("modulus figure needs family members".into()));
    }
    if !fit.c_bold.is_finite() || !fit.c.is_finite() {
        return Err(Error::InvalidArgument("modulus figure needs a fitted modulus".into()));
    }
    let params = PhiParams::diagnostic(fit.eta, fit.c)?;
    let mut pts = Vec::with_capacity(triples.len());
    for t in triples {
        if t.weak == 0.0 {
            continue;
        }
        pts.push(((t.strong / t.data).log10(), (fit.c_bold * t.weak / t.strong).log10()));
    }
    if pts.is_empty() {
        return Err(Error::InvalidArgument("modulus figure needs a nonzero member".into()));
    }
    let x_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - 0.3;
    let x_max = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + 0.3;
    let mut curve = Vec::with_capacity(201);
    for i in 0..=200 {
        let lx = x_min + (x_max - x_min) * i as f64 / 200.0;
        let y = phi(&params, 10f64.powf(lx))?;
        curve.push((lx, y.log10()));
    }
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, y) in pts.iter().chain(curve.iter()) {
        y_min = y_min.min(*y);
        y_max = y_max.max(*y);
    }
    let frame = Frame {
        x_lo: x_min,
        x_hi: x_max,
        y_lo: y_min - 0.2,
        y_hi: y_max + 0.2,
    };
    let mut s = svg_open("log modulus of continuity");
    svg_axes(&mut s, &frame, "strong/data (log10)", "phi (log)");
    decade_ticks(&mut s, &frame);
    let xl = frame.x_lo.ceil() as i64;
    let xh = frame.x_hi.floor() as i64;
    for d in xl..=xh {
        let x = px(frame.sx(d as f64));
        let _ = writeln!(
            s,
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">1e{d}</text>",
            px(SVG_H - MARGIN_B + 16.0)
        );
    }
    let curve_px: Vec<(f64, f64)> = curve.iter().map(|&(x, y)| (frame.sx(x), frame.sy(y))).collect();
    polyline(&mut s, &curve_px, "#1f5fa8");
    let pts_px: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (frame.sx(x), frame.sy(y))).collect();
    dots(&mut s, &pts_px, "#b03a2e");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" fill=\"#1f5fa8\">phi_eta_c, eta={:.4}, c={:.4}</text>",
        px(MARGIN_L + 10.0),
        px(MARGIN_T + 16.0),
        fit.eta,
        fit.c
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" fill=\"#b03a2e\">family members (c_bold * weak / strong)</text>",
        px(MARGIN_L + 10.0),
        px(MARGIN_T + 32.0)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_modulus_svg(path: &Path, fit: &LogModulusFit, triples: &[StabilityTriple]) -> Result<()> {
    write_text(path, &modulus_svg(fit, triples)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryTag;
    use crate::spectral::{spectral_forward, CircleProblem};
    use approx::assert_relative_eq;
    use tempfile::tempdir;

    fn sample_cauchy(n: usize) -> (CauchyData, BoundaryLoop) {
        let problem = CircleProblem::new(1.0, 2.0, 1.0, 1.0).unwrap();
        let flux = FourierSeries::mode(2, ModeKind::Cos, 1.0);
        let sol = spectral_forward(&problem, &flux, &FourierSeries::zero()).unwrap();
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::Gamma, 2.0, n);
        // build through from_trace_conormal so the tangential column uses
        // the same reconstruction the reader applies
        let data = CauchyData::from_trace_conormal(
            BoundaryField::from_series(&lp, &sol.trace_series(2.0)),
            BoundaryField::from_series(&lp, &sol.conormal_gamma_via_robin()),
        )
        .unwrap();
        (data, lp)
    }

    #[test]
    fn cauchy_roundtrip_through_file() {
        let (data, lp) = sample_cauchy(48);
        let dir = tempdir().unwrap();
        let path = dir.path().join("cauchy.csv");
        write_cauchy_csv(&path, &data).unwrap();
        let back = read_cauchy_csv(&path, &lp).unwrap();
        for i in 0..lp.len() {
            assert_relative_eq!(back.trace.values[i], data.trace.values[i], max_relative = 1e-14);
            assert_relative_eq!(back.conormal.values[i], data.conormal.values[i], max_relative = 1e-14);
            assert_relative_eq!(
                back.tangential.values[i],
                data.tangential.values[i],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn cauchy_reader_rejects_wrong_loop() {
        let (data, _) = sample_cauchy(48);
        let dir = tempdir().unwrap();
        let path = dir.path().join("cauchy.csv");
        write_cauchy_csv(&path, &data).unwrap();
        let other = BoundaryLoop::uniform_circle(BoundaryTag::Gamma, 2.0, 50);
        assert!(read_cauchy_csv(&path, &other).is_err());
        let garbage = dir.path().join("bad.csv");
        std::fs::write(&garbage, "nope\n1,2\n").unwrap();
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::Gamma, 2.0, 48);
        assert!(read_cauchy_csv(&garbage, &lp).is_err());
    }

    #[test]
    fn csv_rows_are_angle_ordered_and_full_precision() {
        let (data, _) = sample_cauchy(16);
        let text = cauchy_csv(&data);
        let mut prev = f64::NEG_INFINITY;
        for line in text.lines().skip(1) {
            let theta: f64 = line.split(',').next().unwrap().parse().unwrap();
            assert!(theta > prev);
            prev = theta;
        }
        assert!(text.contains('e'));
        // 16 digits after the point survive
        let third = text.lines().nth(3).unwrap();
        let trace_col = third.split(',').nth(1).unwrap();
        assert!(trace_col.contains('.'));
        assert_eq!(trace_col.split('.').nth(1).unwrap().split('e').next().unwrap().len(), 16);
    }

    #[test]
    fn fourier_csv_lists_every_mode() {
        let mut series = FourierSeries::mode(3, ModeKind::Sin, 0.25);
        series.a0 = 1.5;
        let text = fourier_csv(&series);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,kind,coef");
        assert_eq!(lines.len(), 1 + 1 + 2 * 3);
        assert!(lines[1].starts_with("0,c,1.5"));
        assert!(lines[6].starts_with("3,c,"));
        assert!(lines[7].starts_with("3,s,2.5"));
    }

    #[test]
    fn eigenbasis_files_align() {
        let basis = EigenBasis::circle_analytic(BoundaryTag::S, 1.0, 24, 5).unwrap();
        let head = eigenbasis_csv(&basis);
        assert_eq!(head.lines().count(), 6);
        let modes = eigenmodes_csv(&basis);
        assert_eq!(modes.lines().next().unwrap(), "theta,phi_0,phi_1,phi_2,phi_3,phi_4");
        assert_eq!(modes.lines().count(), 25);
    }

    #[test]
    fn fit_csv_notice_rows() {
        let text = fit_csv(None, None);
        assert!(text.contains("decay_slope,skipped_needs_at_least_4_rows"));
        assert!(text.contains("log_modulus,skipped"));
        let fit = LogModulusFit {
            c_bold: 1.4,
            c: 0.1,
            eta: 0.125,
            in_guarantee_range: true,
            binding_member: 0,
            truncated_c: Some(0.1),
            pass: true,
        };
        let text2 = fit_csv(Some(0.75), Some(&fit));
        assert!(text2.contains("decay_slope,7.5"));
        assert!(text2.contains("log_modulus_pass,true"));
    }

    #[test]
    fn svg_figures_are_self_contained() {
        let rows: Vec<SigmaRow> = (0..=6)
            .map(|n| SigmaRow {
                label: n as f64,
                lambda: (n * n) as f64,
                columns: 2 * n + 1,
                sigma_h1: 0.5 * 0.4f64.powi(n as i32),
                sigma_l2: 0.5 * 0.5f64.powi(n as i32),
                cond_h1: 2f64.powi(n as i32),
            })
            .collect();
        let svg = sweep_svg(&rows).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("polyline"));
        assert!(!svg.contains("http://")  || svg.contains("xmlns"));

        let fit = LogModulusFit {
            c_bold: 1.4,
            c: 0.1,
            eta: 0.125,
            in_guarantee_range: true,
            binding_member: 0,
            truncated_c: None,
            pass: true,
        };
        let triples = vec![
            StabilityTriple { weak: 1.0, strong: 2.0, data: 0.5 },
            StabilityTriple { weak: 1.0, strong: 3.0, data: 0.05 },
        ];
        let svg2 = modulus_svg(&fit, &triples).unwrap();
        assert!(svg2.contains("circle"));
        assert!(svg2.trim_end().ends_with("</svg>"));

        let mut bad = rows.clone();
        bad[2].sigma_l2 = 0.0;
        assert!(sweep_svg(&bad).is_err());
    }

    #[test]
    fn deterministic_bytes() {
        let (data, _) = sample_cauchy(32);
        assert_eq!(cauchy_csv(&data), cauchy_csv(&data));
        let rows = vec![SigmaRow {
            label: 1.0,
            lambda: 1.0,
            columns: 3,
            sigma_h1: 0.25,
            sigma_l2: 0.35,
            cond_h1: 1.8,
        }];
        assert_eq!(sweep_csv(&rows), sweep_csv(&rows));
        assert_eq!(sweep_svg(&rows).unwrap(), sweep_svg(&rows).unwrap());
    }
}
