//! Local polynomial bases on triangles (P2, the P3* free-edge enrichment,
//! P3), weighted orthonormalization, and the global degree-of-freedom map.

use crate::chart::Chart;
use crate::geometry::eval_geometry;
use crate::mesh::Mesh;
use crate::quadrature::{tri_rule, TriRule};
use crate::tensor::Sym2;
use crate::{Error, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Monomial exponents in degree-graded order, up to cubic.
pub const EXP: [(usize, usize); 10] =
    [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)];

/// Bivariate polynomial of degree <= 3 in scaled local coordinates
/// `X = (x - center)/scale`.
#[derive(Clone, Debug)]
pub struct Poly2 {
    pub center: [f64; 2],
    pub scale: f64,
    pub coef: [f64; 10],
}

/// Value and partial derivatives of a scalar polynomial at a point.
#[derive(Clone, Copy, Debug, Default)]
pub struct PolyJet {
    pub v: f64,
    pub d1: [f64; 2],
    /// Hessian, packed (xx, yy, xy).
    pub d2: Sym2,
    /// Third derivatives packed as (xxx, xxy, xyy, yyy).
    pub d3: [f64; 4],
}

fn falling(p: usize, k: usize) -> f64 {
    (0..k).map(|i| (p - i) as f64).product()
}

/// d^k/dX^dx d^l/dY^dy of X^p Y^q at (x, y).
fn dmono(p: usize, q: usize, dx: usize, dy: usize, x: f64, y: f64) -> f64 {
    if dx > p || dy > q {
        return 0.0;
    }
    falling(p, dx) * falling(q, dy) * x.powi((p - dx) as i32) * y.powi((q - dy) as i32)
}

impl Poly2 {
    pub fn zero(center: [f64; 2], scale: f64) -> Self {
        Poly2 { center, scale, coef: [0.0; 10] }
    }

    pub fn monomial(k: usize, center: [f64; 2], scale: f64) -> Self {
        let mut p = Poly2::zero(center, scale);
        p.coef[k] = 1.0;
        p
    }

    /// Affine polynomial with the given value at the center and physical
    /// gradient.
    pub fn affine(value_at_center: f64, grad: [f64; 2], center: [f64; 2], scale: f64) -> Self {
        let mut p = Poly2::zero(center, scale);
        p.coef[0] = value_at_center;
        p.coef[1] = grad[0] * scale;
        p.coef[2] = grad[1] * scale;
        p
    }

    pub fn add_scaled(&mut self, o: &Poly2, s: f64) {
        debug_assert_eq!(self.center, o.center);
        for k in 0..10 {
            self.coef[k] += s * o.coef[k];
        }
    }

    /// Product with an affine polynomial (degree of self must be <= 2).
    pub fn mul_affine(&self, aff: &Poly2) -> Poly2 {
        debug_assert!(self.coef[6..].iter().all(|&c| c == 0.0), "degree overflow");
        debug_assert!(aff.coef[3..].iter().all(|&c| c == 0.0), "not affine");
        let mut out = Poly2::zero(self.center, self.scale);
        let idx = |p: usize, q: usize| EXP.iter().position(|&e| e == (p, q)).unwrap();
        for (k, &(p, q)) in EXP.iter().enumerate().take(6) {
            if self.coef[k] == 0.0 {
                continue;
            }
            out.coef[k] += self.coef[k] * aff.coef[0];
            out.coef[idx(p + 1, q)] += self.coef[k] * aff.coef[1];
            out.coef[idx(p, q + 1)] += self.coef[k] * aff.coef[2];
        }
        out
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let (lx, ly) = self.local(x);
        EXP.iter()
            .zip(&self.coef)
            .map(|(&(p, q), c)| c * dmono(p, q, 0, 0, lx, ly))
            .sum()
    }

    fn local(&self, x: [f64; 2]) -> (f64, f64) {
        ((x[0] - self.center[0]) / self.scale, (x[1] - self.center[1]) / self.scale)
    }

    /// Value and all physical derivatives through order 3.
    pub fn jet(&self, x: [f64; 2]) -> PolyJet {
        let (lx, ly) = self.local(x);
        let s1 = 1.0 / self.scale;
        let s2 = s1 * s1;
        let s3 = s2 * s1;
        let mut j = PolyJet::default();
        for (k, &(p, q)) in EXP.iter().enumerate() {
            let c = self.coef[k];
            if c == 0.0 {
                continue;
            }
            j.v += c * dmono(p, q, 0, 0, lx, ly);
            j.d1[0] += c * s1 * dmono(p, q, 1, 0, lx, ly);
            j.d1[1] += c * s1 * dmono(p, q, 0, 1, lx, ly);
            j.d2.xx += c * s2 * dmono(p, q, 2, 0, lx, ly);
            j.d2.yy += c * s2 * dmono(p, q, 0, 2, lx, ly);
            j.d2.xy += c * s2 * dmono(p, q, 1, 1, lx, ly);
            j.d3[0] += c * s3 * dmono(p, q, 3, 0, lx, ly);
            j.d3[1] += c * s3 * dmono(p, q, 2, 1, lx, ly);
            j.d3[2] += c * s3 * dmono(p, q, 1, 2, lx, ly);
            j.d3[3] += c * s3 * dmono(p, q, 0, 3, lx, ly);
        }
        j
    }
}

/// Barycentric coordinates of a triangle as affine polynomials; `lam[i]`
/// vanishes on the edge opposite vertex `i`.
pub fn barycentric_polys(tri: &[[f64; 2]; 3], center: [f64; 2], scale: f64) -> [Poly2; 3] {
    let area2 = (tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1])
        - (tri[2][0] - tri[0][0]) * (tri[1][1] - tri[0][1]);
    std::array::from_fn(|i| {
        let a = tri[(i + 1) % 3];
        let b = tri[(i + 2) % 3];
        // λ_i(x) = cross(b - a, x - a) / area2
        let grad = [-(b[1] - a[1]) / area2, (b[0] - a[0]) / area2];
        let v0 = ((b[0] - a[0]) * (center[1] - a[1]) - (b[1] - a[1]) * (center[0] - a[0])) / area2;
        Poly2::affine(v0, grad, center, scale)
    })
}

/// Polynomial species for the tangential displacement on one element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Species {
    P2,
    /// Quadratics plus the two cubic enrichments tied to the (single) free
    /// edge, given by its local index.
    P3Star { free_edge: usize },
    P3,
}

impl Species {
    pub fn ndofs(&self) -> usize {
        match self {
            Species::P2 => 6,
            Species::P3Star { .. } => 8,
            Species::P3 => 10,
        }
    }
}

/// Species of the u-space on element `t`: P2 away from the free boundary,
/// P3* with one free edge, full P3 with two (or more).
pub fn select_u_space(mesh: &Mesh, t: usize) -> Species {
    let free = mesh.free_edges_of(t);
    match free.len() {
        0 => Species::P2,
        1 => Species::P3Star { free_edge: free[0] },
        _ => Species::P3,
    }
}

/// Quadrature evaluation context for one element: physical points together
/// with coordinate-domain and surface measures.
pub struct ElemQuad {
    pub points: Vec<[f64; 2]>,
    /// Coordinate-domain measure `area · w_q`.
    pub w_coord: Vec<f64>,
    /// Surface measure `area · w_q · √a`.
    pub w_surf: Vec<f64>,
}

pub fn elem_quad(mesh: &Mesh, t: usize, chart: &Chart, rule: &TriRule) -> Result<ElemQuad> {
    quad_of_tri(&mesh.tri_coords(t), chart, rule)
}

fn quad_of_tri(tri: &[[f64; 2]; 3], chart: &Chart, rule: &TriRule) -> Result<ElemQuad> {
    let area = 0.5
        * ((tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1])
            - (tri[2][0] - tri[0][0]) * (tri[1][1] - tri[0][1]));
    let mut points = Vec::with_capacity(rule.points.len());
    let mut w_coord = Vec::with_capacity(rule.points.len());
    let mut w_surf = Vec::with_capacity(rule.points.len());
    for (lam, w) in rule.points.iter().zip(&rule.weights) {
        let x = [
            lam[0] * tri[0][0] + lam[1] * tri[1][0] + lam[2] * tri[2][0],
            lam[0] * tri[0][1] + lam[1] * tri[1][1] + lam[2] * tri[2][1],
        ];
        let g = eval_geometry(chart, x)?;
        points.push(x);
        w_coord.push(area * w);
        w_surf.push(area * w * g.sqrt_a);
    }
    Ok(ElemQuad { points, w_coord, w_surf })
}

/// Orthonormalizes the first `n` local monomials against the `√a`-weighted
/// L² inner product on the element. The degree-graded order is preserved, so
/// the first 6 functions always span P2.
pub fn orthonormal_basis(tri: &[[f64; 2]; 3], quad: &ElemQuad, n: usize) -> Result<Vec<Poly2>> {
    let center = [
        (tri[0][0] + tri[1][0] + tri[2][0]) / 3.0,
        (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0,
    ];
    let l01 = ((tri[1][0] - tri[0][0]).powi(2) + (tri[1][1] - tri[0][1]).powi(2)).sqrt();
    let l12 = ((tri[2][0] - tri[1][0]).powi(2) + (tri[2][1] - tri[1][1]).powi(2)).sqrt();
    let l20 = ((tri[0][0] - tri[2][0]).powi(2) + (tri[0][1] - tri[2][1]).powi(2)).sqrt();
    let scale = l01.max(l12).max(l20);
    let monos: Vec<Poly2> = (0..n).map(|k| Poly2::monomial(k, center, scale)).collect();
    let vals: Vec<Vec<f64>> =
        monos.iter().map(|m| quad.points.iter().map(|&x| m.eval(x)).collect()).collect();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let s: f64 =
                quad.w_surf.iter().enumerate().map(|(q, w)| w * vals[i][q] * vals[j][q]).sum();
            gram[(i, j)] = s;
        }
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::SingularMomentMatrix("weighted local Gram".into()))?;
    let l = chol.l();
    // basis_i = Σ_j (L^{-T})_{ji} mono_j; solve L^T z = e_i by back substitution
    let mut funcs = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = vec![0.0; n];
        z[i] = 1.0;
        for j in (0..=i).rev() {
            z[j] /= l[(j, j)];
            for k in 0..j {
                z[k] -= l[(j, k)] * z[j];
            }
        }
        let mut f = Poly2::zero(center, scale);
        for (j, m) in monos.iter().enumerate() {
            f.add_scaled(m, z[j]);
        }
        funcs.push(f);
    }
    Ok(funcs)
}

/// The two P3* enrichment polynomials `p³_1 = λ1 p²_1 + 1` and
/// `p³_2 = λ1 p²_2 + λ2` on an element whose local edge `free_edge` lies on
/// the free boundary: both are `√a`-orthogonal to all of P2 and restrict to
/// 1 and λ2 on the free edge.
pub fn build_p3star_basis(
    tri: &[[f64; 2]; 3],
    chart: &Chart,
    free_edge: usize,
    qdeg: usize,
    precomputed: Option<&ElemQuad>,
) -> Result<[Poly2; 2]> {
    let rule = tri_rule(qdeg.max(7))?;
    let quad_owned;
    let quad = match precomputed {
        Some(q) => q,
        None => {
            quad_owned = quad_of_tri(tri, chart, &rule)?;
            &quad_owned
        }
    };
    let p2 = orthonormal_basis(tri, quad, 6)?;
    let center = p2[0].center;
    let scale = p2[0].scale;
    let lams = barycentric_polys(tri, center, scale);
    let lam1 = &lams[free_edge];
    let lam2 = &lams[(free_edge + 1) % 3];

    let p2v: Vec<Vec<f64>> =
        p2.iter().map(|f| quad.points.iter().map(|&x| f.eval(x)).collect()).collect();
    let l1v: Vec<f64> = quad.points.iter().map(|&x| lam1.eval(x)).collect();
    let l2v: Vec<f64> = quad.points.iter().map(|&x| lam2.eval(x)).collect();

    // A_ij = ∫ λ1 φ_i φ_j √a  (SPD since λ1 > 0 inside)
    let mut a = DMatrix::zeros(6, 6);
    for i in 0..6 {
        for j in 0..6 {
            a[(i, j)] = quad
                .w_surf
                .iter()
                .enumerate()
                .map(|(q, w)| w * l1v[q] * p2v[i][q] * p2v[j][q])
                .sum::<f64>();
        }
    }
    let lu = a.lu();
    let mut out = Vec::with_capacity(2);
    for rhs_kind in 0..2 {
        let mut r = nalgebra::DVector::zeros(6);
        for i in 0..6 {
            r[i] = -quad
                .w_surf
                .iter()
                .enumerate()
                .map(|(q, w)| w * if rhs_kind == 0 { 1.0 } else { l2v[q] } * p2v[i][q])
                .sum::<f64>();
        }
        let d = lu
            .solve(&r)
            .ok_or_else(|| Error::SingularMomentMatrix("P3* moment system".into()))?;
        let mut p2a = Poly2::zero(center, scale);
        for (j, f) in p2.iter().enumerate() {
            p2a.add_scaled(f, d[j]);
        }
        let mut enr = p2a.mul_affine(lam1);
        if rhs_kind == 0 {
            enr.coef[0] += 1.0;
        } else {
            enr.add_scaled(lam2, 1.0);
        }
        out.push(enr);
    }
    Ok([out[0].clone(), out[1].clone()])
}

/// Per-element basis of the tangential displacement space.
#[derive(Clone, Debug)]
pub struct LocalBasis {
    pub species: Species,
    pub funcs: Vec<Poly2>,
}

/// Global dof layout: per-element `[u1 block, u2 block, w block]` runs,
/// followed by the shared nodal M dofs (3 components per vertex).
#[derive(Clone, Debug)]
pub struct DofMap {
    pub u_offset: Vec<usize>,
    /// Dofs per u component on each element.
    pub u_ndof: Vec<usize>,
    pub w_offset: Vec<usize>,
    pub n_uw: usize,
    pub n_m: usize,
}

impl DofMap {
    pub const W_NDOF: usize = 10;

    /// Index of the M dof for `vertex` and packed component `comp` within
    /// the M block.
    pub fn m_index(&self, vertex: usize, comp: usize) -> usize {
        3 * vertex + comp
    }

    /// Global u dof (component `c`, local function `k`) of element `t`.
    pub fn u_index(&self, t: usize, c: usize, k: usize) -> usize {
        self.u_offset[t] + c * self.u_ndof[t] + k
    }

    pub fn w_index(&self, t: usize, k: usize) -> usize {
        self.w_offset[t] + k
    }
}

/// Builds the dof map from the per-element species.
pub fn build_dof_map(mesh: &Mesh) -> DofMap {
    let ne = mesh.triangles.len();
    let mut u_offset = Vec::with_capacity(ne);
    let mut u_ndof = Vec::with_capacity(ne);
    let mut w_offset = Vec::with_capacity(ne);
    let mut at = 0usize;
    for t in 0..ne {
        let s = select_u_space(mesh, t).ndofs();
        u_offset.push(at);
        u_ndof.push(s);
        at += 2 * s;
        w_offset.push(at);
        at += DofMap::W_NDOF;
    }
    DofMap { u_offset, u_ndof, w_offset, n_uw: at, n_m: 3 * mesh.vertices.len() }
}

/// All per-element bases plus the dof map for one mesh/chart pair.
pub struct FeSpaces {
    pub u_basis: Vec<LocalBasis>,
    pub w_basis: Vec<Vec<Poly2>>,
    pub dof_map: DofMap,
    pub qdeg: usize,
}

pub fn build_spaces(mesh: &Mesh, chart: &Chart, qdeg: usize) -> Result<FeSpaces> {
    let rule = tri_rule(qdeg)?;
    let per_elem: Result<Vec<(LocalBasis, Vec<Poly2>)>> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let tri = mesh.tri_coords(t);
            let quad = elem_quad(mesh, t, chart, &rule)?;
            let species = select_u_space(mesh, t);
            let w = orthonormal_basis(&tri, &quad, 10)?;
            let u = match species {
                Species::P2 => LocalBasis { species, funcs: orthonormal_basis(&tri, &quad, 6)? },
                Species::P3 => LocalBasis { species, funcs: orthonormal_basis(&tri, &quad, 10)? },
                Species::P3Star { free_edge } => {
                    let mut funcs = orthonormal_basis(&tri, &quad, 6)?;
                    let enr = build_p3star_basis(&tri, chart, free_edge, qdeg, Some(&quad))?;
                    funcs.extend(enr);
                    LocalBasis { species, funcs }
                }
            };
            Ok((u, w))
        })
        .collect();
    let per_elem = per_elem?;
    let mut u_basis = Vec::with_capacity(per_elem.len());
    let mut w_basis = Vec::with_capacity(per_elem.len());
    for (u, w) in per_elem {
        u_basis.push(u);
        w_basis.push(w);
    }
    Ok(FeSpaces { u_basis, w_basis, dof_map: build_dof_map(mesh), qdeg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Marker;
    use approx::assert_relative_eq;

    const REF_TRI: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    #[test]
    fn poly_jet_matches_fd() {
        let mut p = Poly2::zero([0.3, 0.3], 0.8);
        for (k, c) in [(0, 1.0), (1, -0.4), (3, 2.0), (4, 0.7), (6, -1.1), (9, 0.5)] {
            p.coef[k] = c;
        }
        let x = [0.55, 0.2];
        let j = p.jet(x);
        let h = 1e-5;
        let fd1 = (p.eval([x[0] + h, x[1]]) - p.eval([x[0] - h, x[1]])) / (2.0 * h);
        assert_relative_eq!(j.d1[0], fd1, epsilon = 1e-8);
        let fdxy = (p.jet([x[0], x[1] + h]).d1[0] - p.jet([x[0], x[1] - h]).d1[0]) / (2.0 * h);
        assert_relative_eq!(j.d2.xy, fdxy, epsilon = 1e-8);
        let fdxxy = (p.jet([x[0], x[1] + h]).d2.xx - p.jet([x[0], x[1] - h]).d2.xx) / (2.0 * h);
        assert_relative_eq!(j.d3[1], fdxxy, epsilon = 1e-7);
    }

    #[test]
    fn barycentric_partition_of_unity() {
        let tri = [[0.1, 0.2], [0.9, 0.3], [0.4, 1.1]];
        let lams = barycentric_polys(&tri, [0.4, 0.5], 1.0);
        for x in [[0.3, 0.4], [0.5, 0.5]] {
            let s: f64 = lams.iter().map(|l| l.eval(x)).sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-13);
        }
        // λ_i is 1 at vertex i, 0 at the others
        for i in 0..3 {
            for v in 0..3 {
                let expect = if i == v { 1.0 } else { 0.0 };
                assert_relative_eq!(lams[i].eval(tri[v]), expect, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn orthonormal_gram_is_identity() {
        let rule = tri_rule(10).unwrap();
        let tri = [[0.0, 0.0], [0.7, 0.1], [0.2, 0.6]];
        let chart = Chart::Sphere { radius: 2.0, lat0: 0.9 };
        let quad = quad_of_tri(&tri, &chart, &rule).unwrap();
        let basis = orthonormal_basis(&tri, &quad, 10).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let g: f64 = quad
                    .w_surf
                    .iter()
                    .enumerate()
                    .map(|(q, w)| w * basis[i].eval(quad.points[q]) * basis[j].eval(quad.points[q]))
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(g, expect, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn p3star_orthogonality_and_trace() {
        let rule = tri_rule(10).unwrap();
        let quad = quad_of_tri(&REF_TRI, &Chart::Plane, &rule).unwrap();
        // free edge = local edge 0 (opposite vertex 0), from (1,0) to (0,1)
        let enr = build_p3star_basis(&REF_TRI, &Chart::Plane, 0, 10, None).unwrap();
        // √a-orthogonal (here √a = 1) to the 6 quadratic monomials
        for m in 0..6 {
            let mono = Poly2::monomial(m, enr[0].center, enr[0].scale);
            for e in &enr {
                let r: f64 = quad
                    .w_surf
                    .iter()
                    .enumerate()
                    .map(|(q, w)| w * e.eval(quad.points[q]) * mono.eval(quad.points[q]))
                    .sum();
                assert!(r.abs() <= 1e-12, "moment {m} = {r}");
            }
        }
        // traces on the free edge: p³_1 = 1 and p³_2 = λ2 at 5 points
        let lams = barycentric_polys(&REF_TRI, enr[0].center, enr[0].scale);
        for k in 0..5 {
            let t = 0.1 + 0.2 * k as f64;
            let x = [1.0 - t, t]; // param of edge (1,0)->(0,1)
            assert_relative_eq!(enr[0].eval(x), 1.0, epsilon = 1e-11);
            assert_relative_eq!(enr[1].eval(x), lams[1].eval(x), epsilon = 1e-11);
        }
    }

    #[test]
    fn p3star_same_on_cylinder_as_flat() {
        // cylinder has √a = 1, so the construction coincides with the flat one
        let flat = build_p3star_basis(&REF_TRI, &Chart::Plane, 1, 10, None).unwrap();
        let cyl =
            build_p3star_basis(&REF_TRI, &Chart::Cylinder { radius: 1.0 }, 1, 10, None).unwrap();
        for (f, c) in flat.iter().zip(cyl.iter()) {
            for k in 0..10 {
                assert_relative_eq!(f.coef[k], c.coef[k], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn dof_counts_two_triangle_square() {
        let m = Mesh::unit_square(1, [Marker::D; 4]);
        let dm = build_dof_map(&m);
        let n_u: usize = dm.u_ndof.iter().map(|s| 2 * s).sum();
        assert_eq!(n_u, 24);
        assert_eq!(dm.n_uw - n_u, 20);
        assert_eq!(dm.n_m, 12);
        // one boundary edge marked F bumps that element's u block to 16
        let m2 = Mesh::unit_square(1, [Marker::D, Marker::F, Marker::D, Marker::D]);
        let dm2 = build_dof_map(&m2);
        let sizes: Vec<usize> = dm2.u_ndof.iter().map(|s| 2 * s).collect();
        assert!(sizes.contains(&16));
        assert_eq!(sizes.iter().sum::<usize>(), 12 + 16);
    }

    #[test]
    fn all_p2_without_free_boundary() {
        let m = Mesh::unit_square(2, [Marker::D, Marker::S, Marker::D, Marker::S]);
        for t in 0..m.triangles.len() {
            assert_eq!(select_u_space(&m, t), Species::P2);
        }
    }

    #[test]
    fn scatter_gather_roundtrip() {
        use rand::{Rng, SeedableRng};
        let m = Mesh::unit_square(2, [Marker::D, Marker::F, Marker::S, Marker::S]);
        let dm = build_dof_map(&m);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let global: Vec<f64> = (0..dm.n_uw).map(|_| rng.gen()).collect();
        let mut back = vec![0.0; dm.n_uw];
        for t in 0..m.triangles.len() {
            let s = dm.u_ndof[t];
            let mut local = Vec::new();
            for c in 0..2 {
                for k in 0..s {
                    local.push(global[dm.u_index(t, c, k)]);
                }
            }
            for k in 0..DofMap::W_NDOF {
                local.push(global[dm.w_index(t, k)]);
            }
            let mut i = 0;
            for c in 0..2 {
                for k in 0..s {
                    back[dm.u_index(t, c, k)] = local[i];
                    i += 1;
                }
            }
            for k in 0..DofMap::W_NDOF {
                back[dm.w_index(t, k)] = local[i];
                i += 1;
            }
        }
        assert_eq!(global, back);
    }
}
