//! Triangulations of the polygonal coordinate domain, edge topology with
//! D/S/F boundary markers, uniform refinement, and the curvilinear edge
//! frames used by the DG forms.

use crate::chart::Chart;
use crate::geometry::eval_geometry;
use crate::{Error, Result};
use std::collections::HashMap;

/// Boundary condition marker: clamped, simply supported, or free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Marker {
    D,
    S,
    F,
}

impl std::str::FromStr for Marker {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D" | "d" => Ok(Marker::D),
            "S" | "s" => Ok(Marker::S),
            "F" | "f" => Ok(Marker::F),
            other => Err(Error::Config(format!("unknown boundary marker {other:?}"))),
        }
    }
}

/// Interior edge shared by two triangles. `tri[0]` is the globally fixed
/// "first" side for signed jumps; the vertices run counterclockwise as seen
/// from `tri[0]`.
#[derive(Clone, Copy, Debug)]
pub struct InteriorEdge {
    pub v: [usize; 2],
    pub tri: [usize; 2],
    /// Local edge index within each adjacent triangle.
    pub local: [usize; 2],
}

/// Boundary edge with its marker; vertices run counterclockwise as seen from
/// the adjacent triangle.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub tri: usize,
    pub local: usize,
    pub marker: Marker,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub interior_edges: Vec<InteriorEdge>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Per-triangle diameter (longest edge).
    pub h_tri: Vec<f64>,
    /// Per-triangle shape regularity (circumdiameter / indiameter).
    pub regularity: Vec<f64>,
}

/// Local edge `i` of a triangle is opposite local vertex `i`.
pub const EDGE_VERTS: [[usize; 2]; 3] = [[1, 2], [2, 0], [0, 1]];

impl Mesh {
    /// Builds topology from vertices, triangles and boundary markers keyed by
    /// unordered vertex pairs.
    pub fn from_raw(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        markers: &HashMap<(usize, usize), Marker>,
    ) -> Result<Mesh> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::NonconformingMesh(format!(
                        "triangle {t} references missing vertex {v}"
                    )));
                }
            }
            let a = vertices[tri[0]];
            let b = vertices[tri[1]];
            let c = vertices[tri[2]];
            if signed_area(a, b, c) <= 0.0 {
                return Err(Error::NonconformingMesh(format!(
                    "triangle {t} is not counterclockwise or is degenerate"
                )));
            }
        }
        // duplicate triangles (same vertex set)
        let mut seen = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            let mut key = *tri;
            key.sort_unstable();
            if seen.insert(key, t).is_some() {
                return Err(Error::DuplicateTriangle(t));
            }
        }

        // collect edges
        let mut edge_map: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for (le, ev) in EDGE_VERTS.iter().enumerate() {
                let (a, b) = (tri[ev[0]], tri[ev[1]]);
                let key = (a.min(b), a.max(b));
                edge_map.entry(key).or_default().push((t, le));
            }
        }

        let mut interior_edges = Vec::new();
        let mut boundary_edges = Vec::new();
        let mut used_markers = 0usize;
        let mut keys: Vec<_> = edge_map.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let adj = &edge_map[&key];
            match adj.len() {
                1 => {
                    let (t, le) = adj[0];
                    if let Some(m) = markers.get(&key) {
                        let tri = triangles[t];
                        boundary_edges.push(BoundaryEdge {
                            v: [tri[EDGE_VERTS[le][0]], tri[EDGE_VERTS[le][1]]],
                            tri: t,
                            local: le,
                            marker: *m,
                        });
                        used_markers += 1;
                    } else if let Some(mid) = hanging_node(&vertices, key) {
                        return Err(Error::NonconformingMesh(format!(
                            "vertex {mid} hangs on edge ({}, {})",
                            key.0, key.1
                        )));
                    } else {
                        return Err(Error::UnmarkedBoundary(key.0, key.1));
                    }
                }
                2 => {
                    let (t0, le0) = adj[0];
                    let (t1, le1) = adj[1];
                    let tri = triangles[t0];
                    interior_edges.push(InteriorEdge {
                        v: [tri[EDGE_VERTS[le0][0]], tri[EDGE_VERTS[le0][1]]],
                        tri: [t0, t1],
                        local: [le0, le1],
                    });
                }
                n => {
                    return Err(Error::NonconformingMesh(format!(
                        "edge ({}, {}) is shared by {n} triangles",
                        key.0, key.1
                    )));
                }
            }
        }
        if used_markers < markers.len() {
            return Err(Error::NonconformingMesh(
                "marker line does not match any boundary edge".into(),
            ));
        }

        let mut h_tri = Vec::with_capacity(triangles.len());
        let mut regularity = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let p = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let l = [dist(p[1], p[2]), dist(p[2], p[0]), dist(p[0], p[1])];
            h_tri.push(l[0].max(l[1]).max(l[2]));
            let area = signed_area(p[0], p[1], p[2]);
            let s = 0.5 * (l[0] + l[1] + l[2]);
            let circum_r = l[0] * l[1] * l[2] / (4.0 * area);
            let in_r = area / s;
            regularity.push(circum_r / in_r);
        }

        Ok(Mesh { vertices, triangles, interior_edges, boundary_edges, h_tri, regularity })
    }

    /// Parses the plain-text mesh format:
    /// `nodes N` / `id x1 x2` lines, `triangles M` / `id v1 v2 v3` lines,
    /// `boundary K` / `id va vb marker` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Mesh> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split_whitespace())
            .peekable();
        let bad = |what: &str| Error::Config(format!("mesh file: expected {what}"));

        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut markers = HashMap::new();
        while let Some(section) = tokens.next() {
            let count: usize = tokens
                .next()
                .ok_or_else(|| bad("a count"))?
                .parse()
                .map_err(|_| bad("a count"))?;
            match section {
                "nodes" => {
                    for _ in 0..count {
                        let _id: usize =
                            tokens.next().ok_or_else(|| bad("node id"))?.parse().map_err(|_| bad("node id"))?;
                        let x: f64 =
                            tokens.next().ok_or_else(|| bad("x1"))?.parse().map_err(|_| bad("x1"))?;
                        let y: f64 =
                            tokens.next().ok_or_else(|| bad("x2"))?.parse().map_err(|_| bad("x2"))?;
                        vertices.push([x, y]);
                    }
                }
                "triangles" => {
                    for _ in 0..count {
                        let _id: usize =
                            tokens.next().ok_or_else(|| bad("tri id"))?.parse().map_err(|_| bad("tri id"))?;
                        let mut v = [0usize; 3];
                        for vi in &mut v {
                            *vi = tokens
                                .next()
                                .ok_or_else(|| bad("vertex index"))?
                                .parse()
                                .map_err(|_| bad("vertex index"))?;
                        }
                        triangles.push(v);
                    }
                }
                "boundary" => {
                    for _ in 0..count {
                        let _id: usize =
                            tokens.next().ok_or_else(|| bad("edge id"))?.parse().map_err(|_| bad("edge id"))?;
                        let a: usize =
                            tokens.next().ok_or_else(|| bad("va"))?.parse().map_err(|_| bad("va"))?;
                        let b: usize =
                            tokens.next().ok_or_else(|| bad("vb"))?.parse().map_err(|_| bad("vb"))?;
                        let m: Marker = tokens.next().ok_or_else(|| bad("marker"))?.parse()?;
                        markers.insert((a.min(b), a.max(b)), m);
                    }
                }
                other => return Err(Error::Config(format!("mesh file: unknown section {other:?}"))),
            }
        }
        Mesh::from_raw(vertices, triangles, &markers)
    }

    pub fn load(path: &std::path::Path) -> Result<Mesh> {
        Mesh::parse(&std::fs::read_to_string(path)?)
    }

    /// Structured mesh of `[0,lx] x [0,ly]` with `nx x ny` cells split along
    /// the SW-NE diagonal. Markers: `[left, right, bottom, top]`.
    pub fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64, markers: [Marker; 4]) -> Mesh {
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
            }
        }
        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        let mut mk = HashMap::new();
        for j in 0..ny {
            let l = (vid(0, j), vid(0, j + 1));
            mk.insert((l.0.min(l.1), l.0.max(l.1)), markers[0]);
            let r = (vid(nx, j), vid(nx, j + 1));
            mk.insert((r.0.min(r.1), r.0.max(r.1)), markers[1]);
        }
        for i in 0..nx {
            let b = (vid(i, 0), vid(i + 1, 0));
            mk.insert((b.0.min(b.1), b.0.max(b.1)), markers[2]);
            let t = (vid(i, ny), vid(i + 1, ny));
            mk.insert((t.0.min(t.1), t.0.max(t.1)), markers[3]);
        }
        Mesh::from_raw(vertices, triangles, &mk).expect("structured mesh is conforming")
    }

    /// Unit-square mesh with `n x n` cells.
    pub fn unit_square(n: usize, markers: [Marker; 4]) -> Mesh {
        Mesh::rectangle(n, n, 1.0, 1.0, markers)
    }

    /// Splits every triangle into four congruent children; boundary markers
    /// are inherited by the child edges.
    pub fn refine_uniform(&self) -> Mesh {
        let mut vertices = self.vertices.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let pa = vertices[a];
                let pb = vertices[b];
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for tri in &self.triangles {
            let [v0, v1, v2] = *tri;
            let m01 = mid(v0, v1, &mut vertices);
            let m12 = mid(v1, v2, &mut vertices);
            let m20 = mid(v2, v0, &mut vertices);
            triangles.push([v0, m01, m20]);
            triangles.push([m01, v1, m12]);
            triangles.push([m20, m12, v2]);
            triangles.push([m01, m12, m20]);
        }
        let mut markers = HashMap::new();
        for be in &self.boundary_edges {
            let m = mid(be.v[0], be.v[1], &mut vertices);
            let k1 = (be.v[0].min(m), be.v[0].max(m));
            let k2 = (be.v[1].min(m), be.v[1].max(m));
            markers.insert(k1, be.marker);
            markers.insert(k2, be.marker);
        }
        Mesh::from_raw(vertices, triangles, &markers).expect("refinement keeps conformity")
    }

    /// Global shape regularity: max over triangles of the ratio of
    /// circumscribed to inscribed circle diameters.
    pub fn shape_regularity(&self) -> f64 {
        self.regularity.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_h(&self) -> f64 {
        self.h_tri.iter().cloned().fold(0.0, f64::max)
    }

    pub fn edge_length(&self, v: [usize; 2]) -> f64 {
        dist(self.vertices[v[0]], self.vertices[v[1]])
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let tri = self.triangles[t];
        signed_area(self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]])
    }

    pub fn tri_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn tri_centroid(&self, t: usize) -> [f64; 2] {
        let p = self.tri_coords(t);
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    /// Point on an edge at parameter `s ∈ [0,1]` from `v[0]` to `v[1]`.
    pub fn edge_point(&self, v: [usize; 2], s: f64) -> [f64; 2] {
        let a = self.vertices[v[0]];
        let b = self.vertices[v[1]];
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    }

    /// Free edges (local indices) of triangle `t`.
    pub fn free_edges_of(&self, t: usize) -> Vec<usize> {
        self.boundary_edges
            .iter()
            .filter(|be| be.tri == t && be.marker == Marker::F)
            .map(|be| be.local)
            .collect()
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Looks for a vertex strictly inside the segment, which indicates a hanging
/// node rather than a missing marker.
fn hanging_node(vertices: &[[f64; 2]], key: (usize, usize)) -> Option<usize> {
    let a = vertices[key.0];
    let b = vertices[key.1];
    let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
    for (i, p) in vertices.iter().enumerate() {
        if i == key.0 || i == key.1 {
            continue;
        }
        let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / len2;
        if !(1e-12..=1.0 - 1e-12).contains(&t) {
            continue;
        }
        let proj = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        if dist(*p, proj) < 1e-12 * len2.sqrt().max(1.0) {
            return Some(i);
        }
    }
    None
}

/// Frame of a (straight) coordinate-domain edge as seen from one adjacent
/// triangle, at a point on the edge: surface conormal and tangent in
/// covariant/contravariant components, the line-element weight
/// `w_e = √(a_αβ x'_α x'_β)`, and the Euclidean outward normal.
#[derive(Clone, Copy, Debug)]
pub struct EdgeFrame {
    /// Covariant conormal `n_α = √a n̄_α / w_e`.
    pub n_cov: [f64; 2],
    /// Contravariant conormal `n^α = a^{αβ} n_β`.
    pub n_con: [f64; 2],
    /// Covariant tangent `s_α`.
    pub s_cov: [f64; 2],
    /// Contravariant tangent `s^α = x'_α / w_e`.
    pub s_con: [f64; 2],
    /// Line element weight: surface arclength per coordinate arclength.
    pub w_e: f64,
    /// Euclidean outward unit normal in the coordinate domain.
    pub nbar: [f64; 2],
    /// Euclidean unit tangent (counterclockwise around the triangle).
    pub tbar: [f64; 2],
}

impl EdgeFrame {
    /// Builds the frame from the geometry at the point and the edge direction
    /// `tbar` (unit, counterclockwise as seen from the adjacent triangle).
    pub fn from_geometry(g: &crate::geometry::GeometryEval, tbar: [f64; 2]) -> EdgeFrame {
        let nbar = [tbar[1], -tbar[0]];
        let w_e = g.metric.quad(tbar, tbar).sqrt();
        let n_cov = [g.sqrt_a * nbar[0] / w_e, g.sqrt_a * nbar[1] / w_e];
        let n_con = g.metric_inv.apply(n_cov);
        let s_con = [tbar[0] / w_e, tbar[1] / w_e];
        let s_cov = g.metric.apply(s_con);
        EdgeFrame { n_cov, n_con, s_cov, s_con, w_e, nbar, tbar }
    }
}

/// Which side of an edge a frame belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

/// Frame of an interior or boundary edge at arc parameter `s ∈ [0,1]`, as
/// seen from the requested adjacent triangle.
pub fn edge_frame(
    mesh: &Mesh,
    edge_verts: [usize; 2],
    side_tri: usize,
    chart: &Chart,
    s: f64,
) -> Result<EdgeFrame> {
    let x = mesh.edge_point(edge_verts, s);
    let g = eval_geometry(chart, x)?;
    // orient the tangent counterclockwise for the requested side: the stored
    // vertex order is CCW for the triangle that lists the edge in its local
    // ordering
    let tri = mesh.triangles[side_tri];
    let mut oriented = None;
    for ev in &EDGE_VERTS {
        let (a, b) = (tri[ev[0]], tri[ev[1]]);
        if [a, b] == edge_verts {
            oriented = Some([a, b]);
        } else if [b, a] == edge_verts {
            oriented = Some([a, b]);
        }
    }
    let ov = oriented.ok_or_else(|| {
        Error::Config(format!("triangle {side_tri} is not adjacent to the edge"))
    })?;
    let pa = mesh.vertices[ov[0]];
    let pb = mesh.vertices[ov[1]];
    let len = dist(pa, pb);
    let tbar = [(pb[0] - pa[0]) / len, (pb[1] - pa[1]) / len];
    Ok(EdgeFrame::from_geometry(&g, tbar))
}
