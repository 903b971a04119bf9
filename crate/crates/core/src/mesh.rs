//! Structured triangle meshes of the annular domain D between S and Gamma.
//!
//! The mesh blends radially between the two star curves (transfinite
//! interpolation): node (i, j) sits at radius
//! rho_S(theta_j) + (i / n_radial)(rho_Gamma(theta_j) - rho_S(theta_j))
//! along the ray of angle theta_j = 2 pi j / n_angular.  Each quad is split
//! into two positively oriented triangles.
//!
//! Metric-aware boundary data (conormal nu_g, surface measure dS_g with a
//! two-point Gauss rule per edge, trapezoidal per-node loop weights) is not
//! part of the geometry; it is filled in by [`boundary_normals`] for a given
//! metric.  Volume weights store sqrt(det g) * area per triangle, evaluated
//! at the barycenter.
//!
//! A mesh can be dumped to a plain text format (`v x y` / `t i j k` /
//! `e i j TAG` records, 0-based indices, 17 significant digits) and read
//! back; write -> read -> write is byte-identical.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::curve::{AnnularDomain, TWO_PI};
use crate::error::{Error, Result};
use crate::metric::{conormal, line_element, MetricTensor};

/// Which boundary component an edge or field lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Inner (inaccessible) boundary.
    S,
    /// Outer (measurement) boundary.
    Gamma,
}

impl BoundaryTag {
    pub fn label(self) -> &'static str {
        match self {
            BoundaryTag::S => "S",
            BoundaryTag::Gamma => "GAMMA",
        }
    }
}

/// One quadrature node of the per-edge surface rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeGaussPoint {
    pub position: [f64; 2],
    /// dS_g weight carried by this node.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoints ordered counterclockwise along the loop.
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
    /// Outward Euclidean unit normal of D.
    pub normal: [f64; 2],
    /// Metric conormal nu_g at the edge midpoint.
    pub conormal: [f64; 2],
    /// Two-point Gauss rule carrying the induced surface measure.
    pub gauss: [EdgeGaussPoint; 2],
    /// Induced (metric) length of the edge: sum of the Gauss weights.
    pub length_g: f64,
}

/// Ordered trace of one boundary component: vertex ids sorted by angle,
/// their angles, induced edge lengths (edge k runs from node k to node
/// k + 1), and the trapezoidal dS_g node weights derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLoop {
    pub tag: BoundaryTag,
    pub vertices: Vec<usize>,
    pub angles: Vec<f64>,
    pub edge_lengths: Vec<f64>,
    pub node_weights: Vec<f64>,
}

impl BoundaryLoop {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Total induced measure of the loop.
    pub fn total_measure(&self) -> f64 {
        self.node_weights.iter().sum()
    }

    /// Synthetic uniform loop on a circle of the given radius (Euclidean
    /// measure, exact arc lengths).  Used by the spectral-only paths that
    /// never build a mesh.
    pub fn uniform_circle(tag: BoundaryTag, radius: f64, n: usize) -> Self {
        let w = TWO_PI * radius / n as f64;
        BoundaryLoop {
            tag,
            vertices: (0..n).collect(),
            angles: (0..n).map(|j| TWO_PI * j as f64 / n as f64).collect(),
            edge_lengths: vec![w; n],
            node_weights: vec![w; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Positively oriented triangles.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<BoundaryEdge>,
    pub s_loop: BoundaryLoop,
    pub gamma_loop: BoundaryLoop,
    /// sqrt(det g) * area per triangle (barycenter rule).
    pub tri_weights: Vec<f64>,
    /// Maximal Euclidean edge length.
    pub h: f64,
    /// Whether the metric-dependent fields were filled by `boundary_normals`.
    pub metric_filled: bool,
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Build the structured mesh. Euclidean placeholders are stored for the
/// metric-dependent fields; call [`boundary_normals`] next.
pub fn build_annular_mesh(
    domain: &AnnularDomain,
    n_radial: usize,
    n_angular: usize,
) -> Result<Mesh> {
    if n_radial < 2 {
        return Err(Error::Mesh(format!("n_radial must be at least 2, got {n_radial}")));
    }
    if n_angular < 8 {
        return Err(Error::Mesh(format!("n_angular must be at least 8, got {n_angular}")));
    }

    let nv = (n_radial + 1) * n_angular;
    let mut vertices = Vec::with_capacity(nv);
    for i in 0..=n_radial {
        let s = i as f64 / n_radial as f64;
        for j in 0..n_angular {
            let theta = TWO_PI * j as f64 / n_angular as f64;
            let r0 = domain.inner.radius(theta);
            let r1 = domain.outer.radius(theta);
            let r = r0 + s * (r1 - r0);
            vertices.push([r * theta.cos(), r * theta.sin()]);
        }
    }
    let id = |i: usize, j: usize| i * n_angular + (j % n_angular);

    let mut triangles = Vec::with_capacity(2 * n_radial * n_angular);
    for i in 0..n_radial {
        for j in 0..n_angular {
            let a = id(i, j);
            let b = id(i + 1, j);
            let c = id(i + 1, j + 1);
            let d = id(i, j + 1);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    for t in &triangles {
        let area = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        if area <= 0.0 {
            return Err(Error::Mesh(format!(
                "non-positive triangle ({}, {}, {}): signed area {area:.6e}",
                t[0], t[1], t[2]
            )));
        }
    }

    let mut edges = Vec::with_capacity(2 * n_angular);
    for j in 0..n_angular {
        edges.push(raw_edge(id(0, j), id(0, j + 1), BoundaryTag::S, &vertices)?);
    }
    for j in 0..n_angular {
        edges.push(raw_edge(
            id(n_radial, j),
            id(n_radial, j + 1),
            BoundaryTag::Gamma,
            &vertices,
        )?);
    }

    let angles: Vec<f64> = (0..n_angular)
        .map(|j| TWO_PI * j as f64 / n_angular as f64)
        .collect();
    let s_loop = BoundaryLoop {
        tag: BoundaryTag::S,
        vertices: (0..n_angular).map(|j| id(0, j)).collect(),
        angles: angles.clone(),
        edge_lengths: vec![0.0; n_angular],
        node_weights: vec![0.0; n_angular],
    };
    let gamma_loop = BoundaryLoop {
        tag: BoundaryTag::Gamma,
        vertices: (0..n_angular).map(|j| id(n_radial, j)).collect(),
        angles,
        edge_lengths: vec![0.0; n_angular],
        node_weights: vec![0.0; n_angular],
    };

    let mut mesh = Mesh {
        h: mesh_h(&vertices, &triangles),
        tri_weights: triangles
            .iter()
            .map(|t| signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]))
            .collect(),
        vertices,
        triangles,
        edges,
        s_loop,
        gamma_loop,
        metric_filled: false,
    };
    euclidean_loop_weights(&mut mesh);
    Ok(mesh)
}

fn raw_edge(a: usize, b: usize, tag: BoundaryTag, vertices: &[[f64; 2]]) -> Result<BoundaryEdge> {
    let pa = vertices[a];
    let pb = vertices[b];
    let d = [pb[0] - pa[0], pb[1] - pa[1]];
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if len == 0.0 {
        return Err(Error::Mesh(format!("zero-length boundary edge ({a}, {b})")));
    }
    let t = [d[0] / len, d[1] / len];
    // Loops run counterclockwise. On Gamma the domain lies to the left of
    // the direction of travel, so outward is to the right; on S it is the
    // opposite (outward of D points into the hole).
    let normal = match tag {
        BoundaryTag::Gamma => [t[1], -t[0]],
        BoundaryTag::S => [-t[1], t[0]],
    };
    let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
    let off = len / (2.0 * 3.0_f64.sqrt());
    Ok(BoundaryEdge {
        vertices: [a, b],
        tag,
        normal,
        conormal: normal,
        gauss: [
            EdgeGaussPoint {
                position: [mid[0] - off * t[0], mid[1] - off * t[1]],
                weight: 0.5 * len,
            },
            EdgeGaussPoint {
                position: [mid[0] + off * t[0], mid[1] + off * t[1]],
                weight: 0.5 * len,
            },
        ],
        length_g: len,
    })
}

fn mesh_h(vertices: &[[f64; 2]], triangles: &[[usize; 3]]) -> f64 {
    let mut h: f64 = 0.0;
    for t in triangles {
        for k in 0..3 {
            let a = vertices[t[k]];
            let b = vertices[t[(k + 1) % 3]];
            let l = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            h = h.max(l);
        }
    }
    h
}

fn euclidean_loop_weights(mesh: &mut Mesh) {
    for lp in [&mut mesh.s_loop, &mut mesh.gamma_loop] {
        accumulate_loop_weights(lp, &mesh.edges);
    }
}

fn accumulate_loop_weights(lp: &mut BoundaryLoop, edges: &[BoundaryEdge]) {
    let n = lp.len();
    let succ: std::collections::HashMap<usize, f64> = edges
        .iter()
        .filter(|e| e.tag == lp.tag)
        .map(|e| (e.vertices[0], e.length_g))
        .collect();
    lp.edge_lengths = (0..n)
        .map(|k| succ.get(&lp.vertices[k]).copied().unwrap_or(0.0))
        .collect();
    lp.node_weights = (0..n)
        .map(|k| 0.5 * (lp.edge_lengths[(k + n - 1) % n] + lp.edge_lengths[k]))
        .collect();
}

/// Fill the metric-dependent data: conormals, induced surface weights, loop
/// node weights, and volume weights. Consumes and returns the mesh.
pub fn boundary_normals(mut mesh: Mesh, metric: &MetricTensor) -> Result<Mesh> {
    for e in mesh.edges.iter_mut() {
        let pa = mesh.vertices[e.vertices[0]];
        let pb = mesh.vertices[e.vertices[1]];
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if len == 0.0 {
            return Err(Error::Mesh(format!(
                "zero-length boundary edge ({}, {})",
                e.vertices[0], e.vertices[1]
            )));
        }
        let t = [d[0] / len, d[1] / len];
        let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        e.conormal = conormal(&metric.eval(mid[0], mid[1]), e.normal);
        let mut total = 0.0;
        for gp in e.gauss.iter_mut() {
            let m = metric.eval(gp.position[0], gp.position[1]);
            gp.weight = 0.5 * len * line_element(&m, t);
            total += gp.weight;
        }
        e.length_g = total;
    }
    euclidean_loop_weights(&mut mesh); // now picks up the metric lengths
    for (k, t) in mesh.triangles.iter().enumerate() {
        let (a, b, c) = (mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
        let area = signed_area(a, b, c);
        let bc = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
        mesh.tri_weights[k] = area * metric.eval(bc[0], bc[1]).sqrt_det;
    }
    mesh.metric_filled = true;
    Ok(mesh)
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn boundary_loop(&self, tag: BoundaryTag) -> &BoundaryLoop {
        match tag {
            BoundaryTag::S => &self.s_loop,
            BoundaryTag::Gamma => &self.gamma_loop,
        }
    }

    /// Total volume sum(sqrt|g| * area); the g-area of D up to O(h^2).
    pub fn total_volume(&self) -> f64 {
        self.tri_weights.iter().sum()
    }

    /// Structural checks: orientation, closed loops, unit normals.
    pub fn validate(&self) -> Result<()> {
        for t in &self.triangles {
            if signed_area(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]) <= 0.0 {
                return Err(Error::Mesh(format!("triangle ({},{},{}) not positively oriented", t[0], t[1], t[2])));
            }
        }
        for e in &self.edges {
            let n = e.normal;
            if ((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() > 1e-12 {
                return Err(Error::Mesh("non-unit boundary normal".into()));
            }
        }
        for lp in [&self.s_loop, &self.gamma_loop] {
            if lp.is_empty() {
                return Err(Error::Mesh(format!("empty loop {}", lp.tag.label())));
            }
            let n = lp.len();
            let mut degree = std::collections::HashMap::new();
            for e in self.edges.iter().filter(|e| e.tag == lp.tag) {
                *degree.entry(e.vertices[0]).or_insert(0) += 1;
                *degree.entry(e.vertices[1]).or_insert(0) += 1;
            }
            if degree.len() != n || degree.values().any(|&d| d != 2) {
                return Err(Error::Mesh(format!("loop {} is not a single closed cycle", lp.tag.label())));
            }
            for k in 0..n {
                if lp.angles[(k + 1) % n] <= lp.angles[k] && k + 1 != n {
                    return Err(Error::Mesh(format!("loop {} angles not increasing", lp.tag.label())));
                }
            }
        }
        Ok(())
    }
}

fn fmt_coord(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serialize to the text format. Records: `v x y`, `t i j k`, `e i j TAG`.
pub fn write_mesh(mesh: &Mesh, out: &mut impl Write) -> std::io::Result<()> {
    let mut buf = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(buf, "v {} {}", fmt_coord(v[0]), fmt_coord(v[1]));
    }
    for t in &mesh.triangles {
        let _ = writeln!(buf, "t {} {} {}", t[0], t[1], t[2]);
    }
    for e in &mesh.edges {
        let _ = writeln!(buf, "e {} {} {}", e.vertices[0], e.vertices[1], e.tag.label());
    }
    out.write_all(buf.as_bytes())
}

pub fn write_mesh_file(mesh: &Mesh, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_mesh(mesh, &mut f)?;
    Ok(())
}

/// Parse the text format back. Loops are reconstructed by walking the stored
/// edge orientation; metric data is reset to Euclidean placeholders.
pub fn read_mesh(input: &mut impl BufRead) -> Result<Mesh> {
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut edge_records: Vec<(usize, usize, BoundaryTag)> = Vec::new();

    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let kind = it.next().unwrap();
        let parse_f = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| Error::Parse(format!("line {}: missing field", lineno + 1)))?
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
        };
        let parse_u = |s: Option<&str>| -> Result<usize> {
            s.ok_or_else(|| Error::Parse(format!("line {}: missing field", lineno + 1)))?
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
        };
        match kind {
            "v" => vertices.push([parse_f(it.next())?, parse_f(it.next())?]),
            "t" => triangles.push([parse_u(it.next())?, parse_u(it.next())?, parse_u(it.next())?]),
            "e" => {
                let a = parse_u(it.next())?;
                let b = parse_u(it.next())?;
                let tag = match it.next() {
                    Some("S") => BoundaryTag::S,
                    Some("GAMMA") => BoundaryTag::Gamma,
                    other => {
                        return Err(Error::Parse(format!(
                            "line {}: unknown boundary tag {other:?}",
                            lineno + 1
                        )))
                    }
                };
                edge_records.push((a, b, tag));
            }
            other => {
                return Err(Error::Parse(format!(
                    "line {}: unknown record kind {other:?}",
                    lineno + 1
                )))
            }
        }
    }

    let nv = vertices.len();
    for t in &triangles {
        if t.iter().any(|&i| i >= nv) {
            return Err(Error::Parse("triangle index out of range".into()));
        }
    }
    for &(a, b, _) in &edge_records {
        if a >= nv || b >= nv {
            return Err(Error::Parse("edge index out of range".into()));
        }
    }

    let mut edges = Vec::with_capacity(edge_records.len());
    for &(a, b, tag) in &edge_records {
        edges.push(raw_edge(a, b, tag, &vertices)?);
    }

    let s_loop = walk_loop(BoundaryTag::S, &edge_records, &vertices)?;
    let gamma_loop = walk_loop(BoundaryTag::Gamma, &edge_records, &vertices)?;

    let mut mesh = Mesh {
        h: mesh_h(&vertices, &triangles),
        tri_weights: triangles
            .iter()
            .map(|t| signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]))
            .collect(),
        vertices,
        triangles,
        edges,
        s_loop,
        gamma_loop,
        metric_filled: false,
    };
    euclidean_loop_weights(&mut mesh);
    Ok(mesh)
}

pub fn read_mesh_file(path: &Path) -> Result<Mesh> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_mesh(&mut f)
}

fn walk_loop(
    tag: BoundaryTag,
    records: &[(usize, usize, BoundaryTag)],
    vertices: &[[f64; 2]],
) -> Result<BoundaryLoop> {
    let mut succ = std::collections::HashMap::new();
    for &(a, b, _) in records.iter().filter(|r| r.2 == tag) {
        if succ.insert(a, b).is_some() {
            return Err(Error::Parse(format!("loop {}: vertex {a} has two successors", tag.label())));
        }
    }
    if succ.is_empty() {
        return Err(Error::Parse(format!("no edges tagged {}", tag.label())));
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for &v in succ.keys() {
        cx += vertices[v][0];
        cy += vertices[v][1];
    }
    cx /= succ.len() as f64;
    cy /= succ.len() as f64;
    let angle = |v: usize| {
        let mut a = (vertices[v][1] - cy).atan2(vertices[v][0] - cx);
        if a < 0.0 {
            a += TWO_PI;
        }
        // Rounding can push an angle-zero vertex to 2 pi - eps; fold it back
        // so it is recognized as the loop start.
        if TWO_PI - a < 1e-9 {
            a -= TWO_PI;
        }
        a
    };
    let start = succ
        .keys()
        .copied()
        .min_by(|&p, &q| angle(p).partial_cmp(&angle(q)).unwrap().then(p.cmp(&q)))
        .unwrap();
    let mut order = vec![start];
    let mut cur = succ[&start];
    while cur != start {
        order.push(cur);
        cur = *succ
            .get(&cur)
            .ok_or_else(|| Error::Parse(format!("loop {} is not closed", tag.label())))?;
        if order.len() > succ.len() {
            return Err(Error::Parse(format!("loop {} does not close into one cycle", tag.label())));
        }
    }
    if order.len() != succ.len() {
        return Err(Error::Parse(format!("loop {} has more than one cycle", tag.label())));
    }
    let angles: Vec<f64> = order.iter().map(|&v| angle(v)).collect();
    let n = order.len();
    Ok(BoundaryLoop {
        tag,
        vertices: order,
        angles,
        edge_lengths: vec![0.0; n],
        node_weights: vec![0.0; n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::StarCurve;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn circles_mesh(nr: usize, na: usize) -> Mesh {
        let dom = AnnularDomain::circles(1.0, 2.0).unwrap();
        let mesh = build_annular_mesh(&dom, nr, na).unwrap();
        boundary_normals(mesh, &MetricTensor::Identity).unwrap()
    }

    #[test]
    fn counts_for_small_mesh() {
        let mesh = circles_mesh(2, 8);
        assert_eq!(mesh.n_vertices(), 24);
        assert_eq!(mesh.triangles.len(), 32);
        assert_eq!(mesh.edges.iter().filter(|e| e.tag == BoundaryTag::S).count(), 8);
        assert_eq!(mesh.edges.iter().filter(|e| e.tag == BoundaryTag::Gamma).count(), 8);
        mesh.validate().unwrap();
    }

    #[test]
    fn euclidean_area_converges_to_annulus_area() {
        // |D| = pi (4 - 1) = 3 pi; inscribed polygons approach from below at O(h^2).
        let coarse = circles_mesh(8, 32);
        let fine = circles_mesh(16, 64);
        let exact = 3.0 * PI;
        let e_coarse = (coarse.total_volume() - exact).abs();
        let e_fine = (fine.total_volume() - exact).abs();
        assert!(e_coarse / exact < 0.01, "coarse area error {e_coarse}");
        assert!(e_coarse / e_fine > 3.0, "area error should drop ~4x, got {}", e_coarse / e_fine);
    }

    #[test]
    fn boundary_measures_converge() {
        let coarse = circles_mesh(4, 64);
        let fine = circles_mesh(4, 128);
        let exact = 4.0 * PI; // |Gamma| = 2 pi R1
        let e_c = (coarse.gamma_loop.total_measure() - exact).abs();
        let e_f = (fine.gamma_loop.total_measure() - exact).abs();
        assert!(e_c / exact < 1e-3);
        assert!(e_c / e_f > 3.0, "boundary measure error ratio {}", e_c / e_f);
        assert_relative_eq!(coarse.s_loop.total_measure(), 2.0 * PI, max_relative = 1e-3);
    }

    #[test]
    fn inner_normal_points_into_the_hole() {
        let mesh = circles_mesh(2, 64);
        // Edge of S nearest angle 0.
        let e = mesh
            .edges
            .iter()
            .find(|e| e.tag == BoundaryTag::S && e.vertices[0] == mesh.s_loop.vertices[0])
            .unwrap();
        assert!(e.normal[0] < -0.99, "expected ~(-1, 0), got {:?}", e.normal);
        // And Gamma's points away from the origin.
        let eg = mesh
            .edges
            .iter()
            .find(|e| e.tag == BoundaryTag::Gamma && e.vertices[0] == mesh.gamma_loop.vertices[0])
            .unwrap();
        assert!(eg.normal[0] > 0.99);
    }

    #[test]
    fn anisotropic_metric_scales_measures() {
        // g = diag(4, 1): the segment along x doubles, sqrt(det) = 2 doubles the area.
        let dom = AnnularDomain::circles(1.0, 2.0).unwrap();
        let metric = MetricTensor::constant([[4.0, 0.0], [0.0, 1.0]]).unwrap();
        let mesh = boundary_normals(build_annular_mesh(&dom, 8, 64).unwrap(), &metric).unwrap();
        assert_relative_eq!(mesh.total_volume(), 6.0 * PI, max_relative = 1e-2);
        // Conormal near angle 0 on S: nu = (-1, 0), g^-1 nu = (-1/4, 0),
        // normalized in g: nu_g = (-1/2, 0).
        let e = mesh
            .edges
            .iter()
            .find(|e| e.tag == BoundaryTag::S && e.vertices[0] == mesh.s_loop.vertices[0])
            .unwrap();
        // Edge midpoint sits half an angular step away from 0.
        assert_relative_eq!(e.conormal[0], -0.5, epsilon = 1e-2);
    }

    #[test]
    fn h_halves_under_refinement() {
        let m1 = circles_mesh(8, 64);
        let m2 = circles_mesh(16, 128);
        let ratio = m1.h / m2.h;
        assert!((ratio - 2.0).abs() < 0.2, "h ratio {ratio}");
    }

    #[test]
    fn rejects_bad_sizes() {
        let dom = AnnularDomain::circles(1.0, 2.0).unwrap();
        assert!(build_annular_mesh(&dom, 1, 64).is_err());
        assert!(build_annular_mesh(&dom, 4, 4).is_err());
    }

    #[test]
    fn file_round_trip_is_byte_identical() {
        let mesh = circles_mesh(3, 16);
        let mut first = Vec::new();
        write_mesh(&mesh, &mut first).unwrap();
        let reread = read_mesh(&mut std::io::BufReader::new(&first[..])).unwrap();
        let mut second = Vec::new();
        write_mesh(&reread, &mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(reread.n_vertices(), mesh.n_vertices());
        assert_eq!(reread.triangles, mesh.triangles);
        reread.validate().unwrap();
        // Loop ordering survives the round trip.
        assert_eq!(reread.s_loop.vertices, mesh.s_loop.vertices);
        assert_eq!(reread.gamma_loop.vertices, mesh.gamma_loop.vertices);
    }

    #[test]
    fn read_rejects_garbage() {
        let text = b"v 0 0\nq 1 2\n";
        assert!(read_mesh(&mut std::io::BufReader::new(&text[..])).is_err());
        let text2 = b"v 0 0\nv 1 0\ne 0 1 WEST\n";
        assert!(read_mesh(&mut std::io::BufReader::new(&text2[..])).is_err());
    }

    #[test]
    fn star_curve_mesh_positive_and_valid() {
        let inner = StarCurve::harmonics(1.0, vec![0.15], vec![0.0, 0.1]).unwrap();
        let outer = StarCurve::harmonics(2.2, vec![-0.1], vec![]).unwrap();
        let dom = AnnularDomain::new(inner, outer, 0.2).unwrap();
        let mesh = build_annular_mesh(&dom, 6, 48).unwrap();
        let mesh = boundary_normals(mesh, &MetricTensor::sine_conformal(0.2).unwrap()).unwrap();
        mesh.validate().unwrap();
        assert!(mesh.total_volume() > 0.0);
    }
}
