//! Discrete norms, interpolation operators, manufactured solutions through
//! the strong form, consistency residuals, and error reports.

use crate::assemble::{basis_jets, side_dofs, ShellLoads};
use crate::basis::{DofMap, FeSpaces, Species};
use crate::chart::Chart;
use crate::geometry::{
    compliance_tensor, elastic_tensor, elastic_tensor_deriv, eval_geometry, ElasticModuli,
    GeomDeriv,
};
use crate::mesh::{EdgeFrame, Marker, Mesh};
use crate::quadrature::{edge_rule, tri_rule};
use crate::solver::FieldCoefficients;
use crate::sparse::{Csr, LdlFactor};
use crate::strain::{
    bending_strain, gamma_cov1, membrane_strain, rho_cov1, rho_cov2, rho_partials, DispJet,
    ShellField,
};
use crate::tensor::{Sym2, Tensor4};
use crate::{Error, Result};

type F2 = Box<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
type F1 = Box<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Closed-form exact solution with analytic derivatives (u through second,
/// w through third order).
pub struct ExactSolution {
    pub name: String,
    pub u: F2,
    /// `∂_β u_α` as `[α][β]`.
    pub du: Box<dyn Fn([f64; 2]) -> [[f64; 2]; 2] + Send + Sync>,
    pub d2u: Box<dyn Fn([f64; 2]) -> [Sym2; 2] + Send + Sync>,
    pub w: F1,
    pub dw: F2,
    pub d2w: Box<dyn Fn([f64; 2]) -> Sym2 + Send + Sync>,
    /// packed (xxx, xxy, xyy, yyy)
    pub d3w: Box<dyn Fn([f64; 2]) -> [f64; 4] + Send + Sync>,
}

impl ShellField for ExactSolution {
    fn jet(&self, x: [f64; 2]) -> DispJet {
        DispJet {
            u: (self.u)(x),
            du: (self.du)(x),
            d2u: (self.d2u)(x),
            w: (self.w)(x),
            dw: (self.dw)(x),
            d2w: (self.d2w)(x),
            d3w: (self.d3w)(x),
        }
    }
}

impl ExactSolution {
    pub fn zero() -> Self {
        ExactSolution {
            name: "zero".into(),
            u: Box::new(|_| [0.0; 2]),
            du: Box::new(|_| [[0.0; 2]; 2]),
            d2u: Box::new(|_| [Sym2::ZERO; 2]),
            w: Box::new(|_| 0.0),
            dw: Box::new(|_| [0.0; 2]),
            d2w: Box::new(|_| Sym2::ZERO),
            d3w: Box::new(|_| [0.0; 4]),
        }
    }

    /// Fully clamped flat plate: u = 0, w = [x1(1-x1) x2(1-x2)]².
    pub fn clamped_plate() -> Self {
        fn f(t: f64) -> f64 {
            let b = t * (1.0 - t);
            b * b
        }
        fn f1(t: f64) -> f64 {
            let b = t * (1.0 - t);
            2.0 * b * (1.0 - 2.0 * t)
        }
        fn f2(t: f64) -> f64 {
            let b = t * (1.0 - t);
            let b1 = 1.0 - 2.0 * t;
            2.0 * (b1 * b1 - 2.0 * b)
        }
        fn f3(t: f64) -> f64 {
            -12.0 * (1.0 - 2.0 * t)
        }
        ExactSolution {
            name: "clamped_plate".into(),
            u: Box::new(|_| [0.0; 2]),
            du: Box::new(|_| [[0.0; 2]; 2]),
            d2u: Box::new(|_| [Sym2::ZERO; 2]),
            w: Box::new(|x| f(x[0]) * f(x[1])),
            dw: Box::new(|x| [f1(x[0]) * f(x[1]), f(x[0]) * f1(x[1])]),
            d2w: Box::new(|x| {
                Sym2::new(f2(x[0]) * f(x[1]), f(x[0]) * f2(x[1]), f1(x[0]) * f1(x[1]))
            }),
            d3w: Box::new(|x| {
                [
                    f3(x[0]) * f(x[1]),
                    f2(x[0]) * f1(x[1]),
                    f1(x[0]) * f2(x[1]),
                    f(x[0]) * f3(x[1]),
                ]
            }),
        }
    }

    /// Clamped-left / free-right flat plate (simply supported top/bottom):
    /// u = 0, w = x1² sin(π x2).
    pub fn plate_cf() -> Self {
        use std::f64::consts::PI;
        ExactSolution {
            name: "plate_cf".into(),
            u: Box::new(|_| [0.0; 2]),
            du: Box::new(|_| [[0.0; 2]; 2]),
            d2u: Box::new(|_| [Sym2::ZERO; 2]),
            w: Box::new(|x| x[0] * x[0] * (PI * x[1]).sin()),
            dw: Box::new(|x| {
                [
                    2.0 * x[0] * (PI * x[1]).sin(),
                    PI * x[0] * x[0] * (PI * x[1]).cos(),
                ]
            }),
            d2w: Box::new(|x| {
                Sym2::new(
                    2.0 * (PI * x[1]).sin(),
                    -PI * PI * x[0] * x[0] * (PI * x[1]).sin(),
                    2.0 * PI * x[0] * (PI * x[1]).cos(),
                )
            }),
            d3w: Box::new(|x| {
                [
                    0.0,
                    2.0 * PI * (PI * x[1]).cos(),
                    -2.0 * PI * PI * x[0] * (PI * x[1]).sin(),
                    -PI * PI * PI * x[0] * x[0] * (PI * x[1]).cos(),
                ]
            }),
        }
    }

    /// Pure bending of the unit cylinder (γ ≡ 0): u1 = (1-cos x1)²,
    /// u2 = 0, w = -2 (1-cos x1) sin x1; vanishes to second order at x1 = 0.
    pub fn cylinder_bending() -> Self {
        ExactSolution {
            name: "cylinder_bending".into(),
            u: Box::new(|x| {
                let c = x[0].cos();
                [(1.0 - c) * (1.0 - c), 0.0]
            }),
            du: Box::new(|x| {
                let (s, c) = x[0].sin_cos();
                [[2.0 * (1.0 - c) * s, 0.0], [0.0, 0.0]]
            }),
            d2u: Box::new(|x| {
                let (s, c) = x[0].sin_cos();
                [Sym2::new(2.0 * (s * s + c - c * c), 0.0, 0.0), Sym2::ZERO]
            }),
            w: Box::new(|x| {
                let (s, c) = x[0].sin_cos();
                -2.0 * (1.0 - c) * s
            }),
            dw: Box::new(|x| {
                let (s, c) = x[0].sin_cos();
                [-2.0 * (s * s + c - c * c), 0.0]
            }),
            d2w: Box::new(|x| {
                let (s, c) = x[0].sin_cos();
                Sym2::new(-2.0 * (4.0 * s * c - s), 0.0, 0.0)
            }),
            d3w: Box::new(|x| {
                let (s, c) = x[0].sin_cos();
                [-8.0 * (c * c - s * s) + 2.0 * c, 0.0, 0.0, 0.0]
            }),
        }
    }

    /// Smooth fields on the cylinder with nonzero membrane strain:
    /// u = (sin x2, 0), w = cos x1.
    pub fn cylinder_smooth() -> Self {
        ExactSolution {
            name: "cylinder_smooth".into(),
            u: Box::new(|x| [x[1].sin(), 0.0]),
            du: Box::new(|x| [[0.0, x[1].cos()], [0.0, 0.0]]),
            d2u: Box::new(|x| [Sym2::new(0.0, -x[1].sin(), 0.0), Sym2::ZERO]),
            w: Box::new(|x| x[0].cos()),
            dw: Box::new(|x| [-x[0].sin(), 0.0]),
            d2w: Box::new(|x| Sym2::new(-x[0].cos(), 0.0, 0.0)),
            d3w: Box::new(|x| [x[0].sin(), 0.0, 0.0, 0.0]),
        }
    }

    /// In-plane rigid motion plus constant deflection on the flat chart.
    pub fn rigid_flat() -> Self {
        let (tx, ty, om, w0) = (0.3, -0.2, 0.7, 0.4);
        ExactSolution {
            name: "rigid_flat".into(),
            u: Box::new(move |x| [tx - om * x[1], ty + om * x[0]]),
            du: Box::new(move |_| [[0.0, -om], [om, 0.0]]),
            d2u: Box::new(|_| [Sym2::ZERO; 2]),
            w: Box::new(move |_| w0),
            dw: Box::new(|_| [0.0; 2]),
            d2w: Box::new(|_| Sym2::ZERO),
            d3w: Box::new(|_| [0.0; 4]),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Self::zero()),
            "clamped_plate" => Ok(Self::clamped_plate()),
            "plate_cf" => Ok(Self::plate_cf()),
            "cylinder_bending" => Ok(Self::cylinder_bending()),
            "cylinder_smooth" => Ok(Self::cylinder_smooth()),
            "rigid_flat" => Ok(Self::rigid_flat()),
            other => Err(Error::Config(format!("unknown exact-solution case {other:?}"))),
        }
    }
}

/// A displacement field evaluable per element (FE fields are element-local).
pub trait ElemField: Sync {
    fn jet(&self, t: usize, x: [f64; 2]) -> DispJet;
}

/// FE displacement field from a coefficient vector.
pub struct FeDisp<'a> {
    pub spaces: &'a FeSpaces,
    pub uw: &'a [f64],
}

impl ElemField for FeDisp<'_> {
    fn jet(&self, t: usize, x: [f64; 2]) -> DispJet {
        let dm = &self.spaces.dof_map;
        let mut out = DispJet::default();
        for (k, f) in self.spaces.u_basis[t].funcs.iter().enumerate() {
            let j = f.jet(x);
            for c in 0..2 {
                let coef = self.uw[dm.u_index(t, c, k)];
                out.u[c] += coef * j.v;
                out.du[c][0] += coef * j.d1[0];
                out.du[c][1] += coef * j.d1[1];
                out.d2u[c] = out.d2u[c] + j.d2 * coef;
            }
        }
        for (k, f) in self.spaces.w_basis[t].iter().enumerate() {
            let j = f.jet(x);
            let coef = self.uw[dm.w_index(t, k)];
            out.w += coef * j.v;
            out.dw[0] += coef * j.d1[0];
            out.dw[1] += coef * j.d1[1];
            out.d2w = out.d2w + j.d2 * coef;
            for s in 0..4 {
                out.d3w[s] += coef * j.d3[s];
            }
        }
        out
    }
}

/// Exact field viewed as an element field.
pub struct ExactElem<'a>(pub &'a ExactSolution);
impl ElemField for ExactElem<'_> {
    fn jet(&self, _t: usize, x: [f64; 2]) -> DispJet {
        self.0.jet(x)
    }
}

/// Difference between an FE field and an exact field.
pub struct DiffField<'a> {
    pub fe: FeDisp<'a>,
    pub exact: &'a ExactSolution,
}

impl ElemField for DiffField<'_> {
    fn jet(&self, t: usize, x: [f64; 2]) -> DispJet {
        let a = self.fe.jet(t, x);
        let b = self.exact.jet(x);
        DispJet {
            u: [a.u[0] - b.u[0], a.u[1] - b.u[1]],
            du: [
                [a.du[0][0] - b.du[0][0], a.du[0][1] - b.du[0][1]],
                [a.du[1][0] - b.du[1][0], a.du[1][1] - b.du[1][1]],
            ],
            d2u: [a.d2u[0] - b.d2u[0], a.d2u[1] - b.d2u[1]],
            w: a.w - b.w,
            dw: [a.dw[0] - b.dw[0], a.dw[1] - b.dw[1]],
            d2w: a.d2w - b.d2w,
            d3w: [
                a.d3w[0] - b.d3w[0],
                a.d3w[1] - b.d3w[1],
                a.d3w[2] - b.d3w[2],
                a.d3w[3] - b.d3w[3],
            ],
        }
    }
}

/// Squared `H_h` norm of a piecewise field: broken Sobolev parts plus the
/// jump and boundary penalty sums of the discrete norm.
pub fn hh_norm_sq(
    mesh: &Mesh,
    chart: &Chart,
    field: &dyn ElemField,
    qdeg: usize,
) -> Result<f64> {
    let trule = tri_rule(qdeg)?;
    let erule = edge_rule(qdeg)?;
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        let quad = crate::basis::elem_quad(mesh, t, chart, &trule)?;
        for (qi, &x) in quad.points.iter().enumerate() {
            let j = field.jet(t, x);
            let mut v = j.u[0] * j.u[0] + j.u[1] * j.u[1] + j.w * j.w;
            for d in 0..2 {
                v += j.du[0][d] * j.du[0][d] + j.du[1][d] * j.du[1][d] + j.dw[d] * j.dw[d];
            }
            v += j.d2w.xx * j.d2w.xx + j.d2w.yy * j.d2w.yy + j.d2w.xy * j.d2w.xy;
            total += quad.w_coord[qi] * v;
        }
    }
    total += edge_penalty_sums(mesh, chart, field, &erule)?;
    Ok(total)
}

/// Squared `a_h` norm: strain L² parts plus the same jump/boundary sums.
pub fn ah_norm_sq(
    mesh: &Mesh,
    chart: &Chart,
    field: &dyn ElemField,
    qdeg: usize,
) -> Result<f64> {
    let trule = tri_rule(qdeg)?;
    let erule = edge_rule(qdeg)?;
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        let quad = crate::basis::elem_quad(mesh, t, chart, &trule)?;
        for (qi, &x) in quad.points.iter().enumerate() {
            let g = eval_geometry(chart, x)?;
            let j = field.jet(t, x);
            let gam = membrane_strain(&g, &j);
            let rho = bending_strain(&g, &j);
            total += quad.w_coord[qi] * (gam.frob2() + rho.frob2());
        }
    }
    total += edge_penalty_sums(mesh, chart, field, &erule)?;
    Ok(total)
}

fn edge_penalty_sums(
    mesh: &Mesh,
    chart: &Chart,
    field: &dyn ElemField,
    erule: &crate::quadrature::EdgeRule,
) -> Result<f64> {
    let mut total = 0.0;
    for ie in &mesh.interior_edges {
        let len = mesh.edge_length(ie.v);
        for (tq, wq) in erule.points.iter().zip(&erule.weights) {
            let x = mesh.edge_point(ie.v, *tq);
            let a = field.jet(ie.tri[0], x);
            let b = field.jet(ie.tri[1], x);
            let ju = [a.u[0] - b.u[0], a.u[1] - b.u[1]];
            let jdw = [a.dw[0] - b.dw[0], a.dw[1] - b.dw[1]];
            let jw = a.w - b.w;
            total += wq
                * len
                * ((ju[0] * ju[0] + ju[1] * ju[1]) / len
                    + (jdw[0] * jdw[0] + jdw[1] * jdw[1]) / len
                    + jw * jw / len.powi(3));
        }
    }
    for be in &mesh.boundary_edges {
        if be.marker == Marker::F {
            continue;
        }
        let len = mesh.edge_length(be.v);
        for (tq, wq) in erule.points.iter().zip(&erule.weights) {
            let x = mesh.edge_point(be.v, *tq);
            let j = field.jet(be.tri, x);
            let mut v = (j.u[0] * j.u[0] + j.u[1] * j.u[1]) / len + j.w * j.w / len.powi(3);
            if be.marker == Marker::D {
                let g = eval_geometry(chart, x)?;
                let fr = EdgeFrame::from_geometry(&g, edge_tangent(mesh, be.v, be.tri));
                let dn = fr.n_con[0] * j.dw[0] + fr.n_con[1] * j.dw[1];
                v += dn * dn / len;
            }
            total += wq * len * v;
        }
    }
    Ok(total)
}

fn edge_tangent(mesh: &Mesh, v: [usize; 2], tri: usize) -> [f64; 2] {
    let tv = mesh.triangles[tri];
    let mut a = v[0];
    let mut b = v[1];
    for ev in &crate::mesh::EDGE_VERTS {
        if tv[ev[0]] == v[1] && tv[ev[1]] == v[0] {
            a = v[1];
            b = v[0];
        }
    }
    let pa = mesh.vertices[a];
    let pb = mesh.vertices[b];
    let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
    [(pb[0] - pa[0]) / len, (pb[1] - pa[1]) / len]
}

/// `V_h` error of a nodal stress field against an exact stress:
/// `(Σ_{αβ} ‖N^{αβ}‖²_{0,Ω})^{1/2}` of the difference.
pub fn vh_error(
    mesh: &Mesh,
    m_vec: &[f64],
    m_exact: &dyn Fn([f64; 2]) -> Sym2,
    qdeg: usize,
) -> Result<f64> {
    let trule = tri_rule(qdeg)?;
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        let tric = mesh.tri_coords(t);
        let verts = mesh.triangles[t];
        let lams = crate::basis::barycentric_polys(&tric, mesh.tri_centroid(t), 1.0);
        let area = mesh.tri_area(t);
        for (lam_b, wq) in trule.points.iter().zip(&trule.weights) {
            let x = [
                lam_b[0] * tric[0][0] + lam_b[1] * tric[1][0] + lam_b[2] * tric[2][0],
                lam_b[0] * tric[0][1] + lam_b[1] * tric[1][1] + lam_b[2] * tric[2][1],
            ];
            let mut fe = Sym2::ZERO;
            for (vi, lam) in lams.iter().enumerate() {
                let h = lam.eval(x);
                for p in 0..3 {
                    *fe.slot_mut(p) += h * m_vec[3 * verts[vi] + p];
                }
            }
            let d = fe - m_exact(x);
            total += wq * area * d.frob2();
        }
    }
    Ok(total.sqrt())
}

/// Weak stress seminorm `|N|_{V̄_h} = sup b(N; v,z)/‖v,z‖_{H_h}`, computed
/// exactly as `√(mᵀ B G⁻¹ Bᵀ m)` through a factorization of the `H_h` Gram.
pub fn weak_stress_seminorm(
    m: &[f64],
    b: &Csr,
    g_hh_factor: &LdlFactor,
) -> f64 {
    let mut bt_m = vec![0.0; b.ncols];
    b.matvec_t_add(m, 1.0, &mut bt_m);
    let y = g_hh_factor.solve(&bt_m);
    bt_m.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>().max(0.0).sqrt()
}

/// Weighted L² projection of a deflection onto the local cubic space:
/// coefficients in the orthonormal basis are plain moments.
pub fn interpolate_deflection(
    mesh: &Mesh,
    chart: &Chart,
    spaces: &FeSpaces,
    t: usize,
    w_fn: &dyn Fn([f64; 2]) -> f64,
) -> Result<Vec<f64>> {
    let rule = tri_rule(spaces.qdeg)?;
    let quad = crate::basis::elem_quad(mesh, t, chart, &rule)?;
    Ok(spaces.w_basis[t]
        .iter()
        .map(|f| {
            quad.points
                .iter()
                .zip(&quad.w_surf)
                .map(|(&p, w)| w * w_fn(p) * f.eval(p))
                .sum()
        })
        .collect())
}

/// Interpolation of one tangential component into the element's u-space:
/// interior weighted moments against P2, plus `√a`-weighted zero and first
/// moments on each free edge.
pub fn interpolate_displacement(
    mesh: &Mesh,
    chart: &Chart,
    spaces: &FeSpaces,
    t: usize,
    u_fn: &dyn Fn([f64; 2]) -> f64,
) -> Result<Vec<f64>> {
    let rule = tri_rule(spaces.qdeg)?;
    let erule = edge_rule(spaces.qdeg)?;
    let quad = crate::basis::elem_quad(mesh, t, chart, &rule)?;
    let basis = &spaces.u_basis[t];
    let funcs = &basis.funcs;
    let moment = |f: &crate::basis::Poly2| -> f64 {
        quad.points.iter().zip(&quad.w_surf).map(|(&p, w)| w * u_fn(p) * f.eval(p)).sum()
    };
    let mut coefs: Vec<f64> = Vec::with_capacity(funcs.len());
    match basis.species {
        Species::P2 => {
            for f in funcs {
                coefs.push(moment(f));
            }
        }
        Species::P3Star { free_edge } => {
            // interior part is diagonal; the two enrichment coefficients
            // come from the free-edge moments
            for f in funcs.iter().take(6) {
                coefs.push(moment(f));
            }
            let tri = mesh.triangles[t];
            let ev = crate::mesh::EDGE_VERTS[free_edge];
            let e = [tri[ev[0]], tri[ev[1]]];
            let (mat, rhs) = edge_moment_system(mesh, chart, &erule, e, funcs, &coefs, u_fn, 6)?;
            let sol = mat
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::SingularMomentMatrix("P3* edge moments".into()))?;
            coefs.extend(sol.iter());
        }
        Species::P3 => {
            for f in funcs.iter().take(6) {
                coefs.push(moment(f));
            }
            let free = mesh.free_edges_of(t);
            if free.len() < 2 {
                // full-cubic fallback on elements selected as P3 without two
                // free edges never occurs through select_u_space
                return Err(Error::SingularMomentMatrix("P3 needs two free edges".into()));
            }
            let tri = mesh.triangles[t];
            let mut mat = nalgebra::DMatrix::zeros(4, 4);
            let mut rhs = nalgebra::DVector::zeros(4);
            for (row2, &fe) in free.iter().take(2).enumerate() {
                let ev = crate::mesh::EDGE_VERTS[fe];
                let e = [tri[ev[0]], tri[ev[1]]];
                let (m2, r2) =
                    edge_moment_system(mesh, chart, &erule, e, funcs, &coefs, u_fn, 6)?;
                for r in 0..2 {
                    for c in 0..4 {
                        mat[(2 * row2 + r, c)] = m2[(r, c)];
                    }
                    rhs[2 * row2 + r] = r2[r];
                }
            }
            let sol = mat
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::SingularMomentMatrix("P3 edge moments".into()))?;
            coefs.extend(sol.iter());
        }
    }
    Ok(coefs)
}

/// Builds the edge-moment equations `∫_e (u - u^I) p √a = 0` for p ∈ {1, t}
/// in the unknown tail coefficients (from `tail_from` on).
#[allow(clippy::too_many_arguments)]
fn edge_moment_system(
    mesh: &Mesh,
    chart: &Chart,
    erule: &crate::quadrature::EdgeRule,
    e: [usize; 2],
    funcs: &[crate::basis::Poly2],
    head_coefs: &[f64],
    u_fn: &dyn Fn([f64; 2]) -> f64,
    tail_from: usize,
) -> Result<(nalgebra::DMatrix<f64>, nalgebra::DVector<f64>)> {
    let len = mesh.edge_length(e);
    let ntail = funcs.len() - tail_from;
    let mut mat = nalgebra::DMatrix::zeros(2, ntail);
    let mut rhs = nalgebra::DVector::zeros(2);
    for (tq, wq) in erule.points.iter().zip(&erule.weights) {
        let x = mesh.edge_point(e, *tq);
        let g = eval_geometry(chart, x)?;
        let w = wq * len * g.sqrt_a;
        let mut head = 0.0;
        for (k, c) in head_coefs.iter().enumerate() {
            head += c * funcs[k].eval(x);
        }
        let resid = u_fn(x) - head;
        for (p_idx, p_val) in [1.0, *tq].into_iter().enumerate() {
            rhs[p_idx] += w * resid * p_val;
            for k in 0..ntail {
                mat[(p_idx, k)] += w * funcs[tail_from + k].eval(x) * p_val;
            }
        }
    }
    Ok((mat, rhs))
}

/// Interpolates full exact fields into the displacement space.
pub fn interpolate_all(
    mesh: &Mesh,
    chart: &Chart,
    spaces: &FeSpaces,
    exact: &ExactSolution,
) -> Result<Vec<f64>> {
    let dm = &spaces.dof_map;
    let mut x = vec![0.0; dm.n_uw];
    for t in 0..mesh.triangles.len() {
        for c in 0..2 {
            let coefs =
                interpolate_displacement(mesh, chart, spaces, t, &|p| (exact.u)(p)[c])?;
            for (k, v) in coefs.iter().enumerate() {
                x[dm.u_index(t, c, k)] = *v;
            }
        }
        let coefs = interpolate_deflection(mesh, chart, spaces, t, &|p| (exact.w)(p))?;
        for (k, v) in coefs.iter().enumerate() {
            x[dm.w_index(t, k)] = *v;
        }
    }
    Ok(x)
}

/// Global `√a`-weighted L² projection of a stress field onto continuous P1.
pub fn project_stress(
    mesh: &Mesh,
    chart: &Chart,
    m_fn: &dyn Fn([f64; 2]) -> Sym2,
    qdeg: usize,
) -> Result<Vec<f64>> {
    let trule = tri_rule(qdeg)?;
    let nv = mesh.vertices.len();
    let mut mass_t = Vec::new();
    let mut rhs = vec![vec![0.0; nv]; 3];
    for t in 0..mesh.triangles.len() {
        let tric = mesh.tri_coords(t);
        let verts = mesh.triangles[t];
        let lams = crate::basis::barycentric_polys(&tric, mesh.tri_centroid(t), 1.0);
        let quad = crate::basis::elem_quad(mesh, t, chart, &trule)?;
        for (qi, &x) in quad.points.iter().enumerate() {
            let w = quad.w_surf[qi];
            let hats: Vec<f64> = lams.iter().map(|l| l.eval(x)).collect();
            let mx = m_fn(x);
            for vi in 0..3 {
                for vj in 0..3 {
                    mass_t.push((verts[vi] as u32, verts[vj] as u32, w * hats[vi] * hats[vj]));
                }
                for p in 0..3 {
                    rhs[p][verts[vi]] += w * hats[vi] * mx.slot(p);
                }
            }
        }
    }
    let mass = Csr::from_triplets(nv, nv, mass_t);
    let fact = LdlFactor::new(&mass, crate::sparse::identity_perm(nv))?;
    let mut out = vec![0.0; 3 * nv];
    for p in 0..3 {
        let sol = fact.solve(&rhs[p]);
        for v in 0..nv {
            out[3 * v + p] = sol[v];
        }
    }
    Ok(out)
}

/// Manufactured case: exact fields plus the loads produced by the mixed
/// strong form, with `M = ε⁻² a^{αβλγ} γ_λγ(u, w)`.
pub struct ManufacturedCase {
    pub chart: Chart,
    pub exact: ExactSolution,
    pub eps: f64,
    pub moduli: ElasticModuli,
}

/// Builds a manufactured case, validating the supplied closed-form
/// derivatives against finite differences at sample points.
pub fn manufactured_case(
    chart: Chart,
    exact: ExactSolution,
    eps: f64,
    moduli: ElasticModuli,
) -> Result<ManufacturedCase> {
    for &x in &[[0.31, 0.41], [0.63, 0.17], [0.12, 0.77]] {
        let h = 1e-5;
        let j = exact.jet(x);
        for d in 0..2 {
            let mut xp = x;
            xp[d] += h;
            let mut xm = x;
            xm[d] -= h;
            let (jp, jm) = (exact.jet(xp), exact.jet(xm));
            for c in 0..2 {
                let fd = (jp.u[c] - jm.u[c]) / (2.0 * h);
                if (fd - j.du[c][d]).abs() > 1e-6 * (1.0 + fd.abs()) {
                    return Err(Error::DifferentiationToleranceExceeded(format!(
                        "du[{c}][{d}] at {x:?}: closed form {} vs FD {fd}",
                        j.du[c][d]
                    )));
                }
            }
            let fd = (jp.w - jm.w) / (2.0 * h);
            if (fd - j.dw[d]).abs() > 1e-6 * (1.0 + fd.abs()) {
                return Err(Error::DifferentiationToleranceExceeded(format!(
                    "dw[{d}] at {x:?}: closed form {} vs FD {fd}",
                    j.dw[d]
                )));
            }
            let fdh = [
                (jp.dw[0] - jm.dw[0]) / (2.0 * h),
                (jp.dw[1] - jm.dw[1]) / (2.0 * h),
            ];
            for a in 0..2 {
                if (fdh[a] - j.d2w.get(a, d)).abs() > 1e-6 * (1.0 + fdh[a].abs()) {
                    return Err(Error::DifferentiationToleranceExceeded(format!(
                        "d2w[{a}{d}] at {x:?}"
                    )));
                }
            }
            let fd3 = [
                (jp.d2w.xx - jm.d2w.xx) / (2.0 * h),
                (jp.d2w.xy - jm.d2w.xy) / (2.0 * h),
                (jp.d2w.yy - jm.d2w.yy) / (2.0 * h),
            ];
            let an3 = [
                j.d3w_get(0, 0, d),
                j.d3w_get(0, 1, d),
                j.d3w_get(1, 1, d),
            ];
            for k in 0..3 {
                if (fd3[k] - an3[k]).abs() > 1e-5 * (1.0 + fd3[k].abs()) {
                    return Err(Error::DifferentiationToleranceExceeded(format!(
                        "d3w at {x:?}: {} vs {}",
                        an3[k], fd3[k]
                    )));
                }
            }
        }
    }
    Ok(ManufacturedCase { chart, exact, eps, moduli })
}

impl ManufacturedCase {
    /// Exact scaled membrane stress `M^{αβ} = ε⁻² a^{αβλγ} γ_λγ`.
    pub fn m_exact(&self, x: [f64; 2]) -> Sym2 {
        let g = eval_geometry(&self.chart, x).expect("regular chart");
        let e4 = elastic_tensor(&g, &self.moduli);
        let gam = membrane_strain(&g, &self.exact.jet(x));
        e4.apply(&gam) * (1.0 / (self.eps * self.eps))
    }
}

impl ShellLoads for ManufacturedCase {
    fn volume(&self, x: [f64; 2]) -> ([f64; 2], f64) {
        let gd = GeomDeriv::new(&self.chart, x).expect("regular chart");
        let g = &gd.g;
        let j = self.exact.jet(x);
        let e4 = elastic_tensor(g, &self.moduli);
        let gam = membrane_strain(g, &j);
        let rho = bending_strain(g, &j);
        let gam_cov = gamma_cov1(g, &j);
        let rho_cov = rho_cov1(&gd, &j);
        let rc2 = rho_cov2(&self.chart, &self.exact, x).expect("regular chart");
        let inv_e2 = 1.0 / (self.eps * self.eps);

        let q_t = e4.apply(&rho);
        let eg = e4.apply(&gam);
        let e_rho_cov = [e4.apply(&rho_cov[0]), e4.apply(&rho_cov[1])];
        let e_gam_cov = [e4.apply(&gam_cov[0]), e4.apply(&gam_cov[1])];

        // p^α = -(1/3)[a^{γβστ}ρ_{στ|γ} b^α_β + a^{γβστ}(ρ_στ b^α_γ)|_β
        //        + a^{αβγδ}γ_{γδ|β}] - M^{αβ}|_β
        let mut p = [0.0; 2];
        for a in 0..2 {
            let mut t1 = 0.0;
            let mut t2 = 0.0;
            for b in 0..2 {
                for gg in 0..2 {
                    // a^{γβστ} ρ_{στ|γ} b^α_β
                    t1 += e_rho_cov[gg].get(gg, b) * g.b_mix[a][b];
                    // a^{γβστ} ρ_{στ|β} b^α_γ + a^{γβστ} ρ_στ b^α_{γ|β}
                    t2 += e_rho_cov[b].get(gg, b) * g.b_mix[a][gg];
                    t2 += q_t.get(gg, b) * g.b_mix_cov[a][gg][b];
                }
            }
            let t3: f64 = (0..2).map(|b| e_gam_cov[b].get(a, b)).sum();
            p[a] = -(t1 + t2 + t3) / 3.0 - inv_e2 * t3;
        }

        // p³ = (1/3)[a^{αβλγ}ρ_{λγ|αβ} - c_αβ (Eρ)^{αβ} - b_αβ (Eγ)^{αβ}]
        //      - b_αβ M^{αβ}
        let mut s1 = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                s1 += e4.apply(&rc2[a][b]).get(a, b);
            }
        }
        let p3 = (s1 - g.c3.dot(&q_t) - g.b.dot(&eg)) / 3.0 - inv_e2 * g.b.dot(&eg);
        (p, p3)
    }

    fn boundary(&self, x: [f64; 2], fr: &EdgeFrame, marker: Marker) -> ([f64; 2], f64, f64) {
        let gd = GeomDeriv::new(&self.chart, x).expect("regular chart");
        let g = &gd.g;
        let j = self.exact.jet(x);
        let e4 = elastic_tensor(g, &self.moduli);
        let gam = membrane_strain(g, &j);
        let rho = bending_strain(g, &j);
        let q_t = e4.apply(&rho);
        let eg = e4.apply(&gam);
        let inv_e2 = 1.0 / (self.eps * self.eps);

        // m = (1/3) (Eρ)^{αβ} n_α n_β on S and F edges
        let m = q_t.quad(fr.n_cov, fr.n_cov) / 3.0;
        if marker == Marker::S {
            return ([0.0; 2], 0.0, m);
        }
        // q^α = (2/3)(Eρ)^{γβ} b^α_β n_γ + (1/3)(Eγ)^{αβ} n_β + M^{αβ} n_β
        let mut q = [0.0; 2];
        for a in 0..2 {
            let mut v = 0.0;
            for b in 0..2 {
                for gg in 0..2 {
                    v += 2.0 / 3.0 * q_t.get(gg, b) * g.b_mix[a][b] * fr.n_cov[gg];
                }
                v += (1.0 / 3.0 + inv_e2) * eg.get(a, b) * fr.n_cov[b];
            }
            q[a] = v;
        }
        // q³ = -(1/3)[ (Eρ_{|β})^{αβ} n_α + D_s((Eρ)^{αβ} n_β s_α) ]
        let rho_cov = rho_cov1(&gd, &j);
        let mut r = [0.0; 2];
        for a in 0..2 {
            for b in 0..2 {
                r[a] += e4.apply(&rho_cov[b]).get(a, b);
            }
        }
        let de4 = elastic_tensor_deriv(g, &self.moduli, fr.tbar);
        let drho = rho_partials(&gd, &j);
        let drho_t = Sym2 {
            xx: fr.tbar[0] * drho[0].xx + fr.tbar[1] * drho[1].xx,
            yy: fr.tbar[0] * drho[0].yy + fr.tbar[1] * drho[1].yy,
            xy: fr.tbar[0] * drho[0].xy + fr.tbar[1] * drho[1].xy,
        };
        let (dn, ds) = frame_deriv_pub(g, fr);
        let d_q = de4.apply(&rho) + e4.apply(&drho_t);
        let ds_term = (d_q.quad(fr.s_cov, fr.n_cov)
            + q_t.quad(ds, fr.n_cov)
            + q_t.quad(fr.s_cov, dn))
            / fr.w_e;
        let q3 = -(r[0] * fr.n_cov[0] + r[1] * fr.n_cov[1] + ds_term) / 3.0;
        (q, q3, m)
    }
}

/// Coordinate-arclength derivatives of the frame along a straight edge
/// (shared with the assembly's tangential boundary term).
pub fn frame_deriv_pub(
    g: &crate::geometry::GeometryEval,
    fr: &EdgeFrame,
) -> ([f64; 2], [f64; 2]) {
    let t = fr.tbar;
    let dmetric = Sym2::from_fn(|a, b| {
        let mut s = 0.0;
        for gg in 0..2 {
            for l in 0..2 {
                s += t[gg]
                    * (g.chr[l].get(gg, a) * g.metric.get(l, b)
                        + g.chr[l].get(gg, b) * g.metric.get(a, l));
            }
        }
        s
    });
    let sa_dot = t[0] * g.d_sqrt_a[0] + t[1] * g.d_sqrt_a[1];
    let we = fr.w_e;
    let we_dot = dmetric.quad(t, t) / (2.0 * we);
    let dn = [
        fr.nbar[0] * (sa_dot * we - g.sqrt_a * we_dot) / (we * we),
        fr.nbar[1] * (sa_dot * we - g.sqrt_a * we_dot) / (we * we),
    ];
    let mt = g.metric.apply(t);
    let dmt = dmetric.apply(t);
    let ds = [
        (dmt[0] * we - mt[0] * we_dot) / (we * we),
        (dmt[1] * we - mt[1] * we_dot) / (we * we),
    ];
    (dn, ds)
}

/// Applies the form `a(·,·)` with an exact (continuous) trial field against
/// every displacement basis function.
pub fn apply_a_exact(
    mesh: &Mesh,
    chart: &Chart,
    spaces: &FeSpaces,
    moduli: &ElasticModuli,
    c_pen: f64,
    exact: &ExactSolution,
) -> Result<Vec<f64>> {
    let dm = &spaces.dof_map;
    let trule = tri_rule(spaces.qdeg)?;
    let erule = edge_rule(spaces.qdeg)?;
    let mut out = vec![0.0; dm.n_uw];

    for t in 0..mesh.triangles.len() {
        let dofs = side_dofs(dm, t);
        let quad = crate::basis::elem_quad(mesh, t, chart, &trule)?;
        for (qi, &x) in quad.points.iter().enumerate() {
            let g = eval_geometry(chart, x)?;
            let e4 = elastic_tensor(&g, moduli);
            let je = exact.jet(x);
            let (gam_e, rho_e) = (membrane_strain(&g, &je), bending_strain(&g, &je));
            let (eg, er) = (e4.apply(&gam_e), e4.apply(&rho_e));
            let jets = basis_jets(spaces, t, x);
            let w = quad.w_surf[qi] / 3.0;
            for (i, jv) in jets.iter().enumerate() {
                let gam_v = membrane_strain(&g, jv);
                let rho_v = bending_strain(&g, jv);
                out[dofs[i]] += w * (er.dot(&rho_v) + eg.dot(&gam_v));
            }
        }
    }

    // interior edges: only the exact-trace x test-jump families survive
    for ie in &mesh.interior_edges {
        let len = mesh.edge_length(ie.v);
        for (tq, wq) in erule.points.iter().zip(&erule.weights) {
            let x = mesh.edge_point(ie.v, *tq);
            let gd = GeomDeriv::new(chart, x)?;
            let e4 = elastic_tensor(&gd.g, moduli);
            let ex = ExactTraces::new(&gd, &e4, &exact.jet(x));
            let fr0 = EdgeFrame::from_geometry(&gd.g, edge_tangent(mesh, ie.v, ie.tri[0]));
            let w_surf = wq * len * fr0.w_e;
            for side in 0..2 {
                let t = ie.tri[side];
                let n_cov = if side == 0 {
                    fr0.n_cov
                } else {
                    [-fr0.n_cov[0], -fr0.n_cov[1]]
                };
                let dofs = side_dofs(dm, t);
                let jets = basis_jets(spaces, t, x);
                for (i, jv) in jets.iter().enumerate() {
                    let mut v = 0.0;
                    for a in 0..2 {
                        for gg in 0..2 {
                            v -= ex.x_tr[a][gg] * jv.u[a] * n_cov[gg] / 3.0;
                        }
                        for b in 0..2 {
                            v -= ex.q.get(a, b) * jv.dw[a] * n_cov[b] / 3.0;
                        }
                        v += ex.r[a] * jv.w * n_cov[a] / 3.0;
                    }
                    out[dofs[i]] += w_surf * v;
                }
            }
        }
    }

    // S/D boundary edges
    for be in &mesh.boundary_edges {
        if be.marker == Marker::F {
            continue;
        }
        let len = mesh.edge_length(be.v);
        let dofs = side_dofs(dm, be.tri);
        for (tq, wq) in erule.points.iter().zip(&erule.weights) {
            let x = mesh.edge_point(be.v, *tq);
            let gd = GeomDeriv::new(chart, x)?;
            let e4 = elastic_tensor(&gd.g, moduli);
            let de4 = elastic_tensor_deriv(&gd.g, moduli, edge_tangent(mesh, be.v, be.tri));
            let je = exact.jet(x);
            let ex = ExactTraces::new(&gd, &e4, &je);
            let fr = EdgeFrame::from_geometry(&gd.g, edge_tangent(mesh, be.v, be.tri));
            let (dn, ds) = frame_deriv_pub(&gd.g, &fr);
            let drho_t = Sym2 {
                xx: fr.tbar[0] * ex.drho[0].xx + fr.tbar[1] * ex.drho[1].xx,
                yy: fr.tbar[0] * ex.drho[0].yy + fr.tbar[1] * ex.drho[1].yy,
                xy: fr.tbar[0] * ex.drho[0].xy + fr.tbar[1] * ex.drho[1].xy,
            };
            let d_q = de4.apply(&ex.rho) + e4.apply(&drho_t);
            let ds_ex = (d_q.quad(fr.s_cov, fr.n_cov)
                + ex.q.quad(ds, fr.n_cov)
                + ex.q.quad(fr.s_cov, dn))
                / fr.w_e;
            let s_ex =
                ex.r[0] * fr.n_cov[0] + ex.r[1] * fr.n_cov[1] + ds_ex;
            let qnn_ex = ex.q.quad(fr.n_cov, fr.n_cov);
            let dn_w_ex = fr.n_con[0] * je.dw[0] + fr.n_con[1] * je.dw[1];
            let w_surf = wq * len * fr.w_e;
            let w_coord = wq * len;
            let jets = basis_jets(spaces, be.tri, x);
            for (i, jv) in jets.iter().enumerate() {
                // trace-based traces of the test function
                let gam_v = membrane_strain(&gd.g, jv);
                let rho_v = bending_strain(&gd.g, jv);
                let (egv, erv) = (e4.apply(&gam_v), e4.apply(&rho_v));
                let mut x_v = [[0.0; 2]; 2];
                for a in 0..2 {
                    for gg in 0..2 {
                        let mut s = egv.get(a, gg);
                        for b in 0..2 {
                            s += 2.0 * erv.get(gg, b) * gd.g.b_mix[a][b];
                        }
                        x_v[a][gg] = s;
                    }
                }
                let rc_v = rho_cov1(&gd, jv);
                let mut r_v = [0.0; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        r_v[a] += e4.apply(&rc_v[b]).get(a, b);
                    }
                }
                let drho_v = rho_partials(&gd, jv);
                let drho_vt = Sym2 {
                    xx: fr.tbar[0] * drho_v[0].xx + fr.tbar[1] * drho_v[1].xx,
                    yy: fr.tbar[0] * drho_v[0].yy + fr.tbar[1] * drho_v[1].yy,
                    xy: fr.tbar[0] * drho_v[0].xy + fr.tbar[1] * drho_v[1].xy,
                };
                let d_qv = de4.apply(&rho_v) + e4.apply(&drho_vt);
                let ds_v = (d_qv.quad(fr.s_cov, fr.n_cov)
                    + erv.quad(ds, fr.n_cov)
                    + erv.quad(fr.s_cov, dn))
                    / fr.w_e;
                let s_v = r_v[0] * fr.n_cov[0] + r_v[1] * fr.n_cov[1] + ds_v;
                let dn_z = fr.n_con[0] * jv.dw[0] + fr.n_con[1] * jv.dw[1];

                let mut v = 0.0;
                for a in 0..2 {
                    for gg in 0..2 {
                        v -= (ex.x_tr[a][gg] * jv.u[a] + x_v[a][gg] * je.u[a]) * fr.n_cov[gg]
                            / 3.0;
                    }
                }
                v += (s_ex * jv.w + s_v * je.w) / 3.0;
                if be.marker == Marker::D {
                    let qnn_v = erv.quad(fr.n_cov, fr.n_cov);
                    v -= (qnn_ex * dn_z + qnn_v * dn_w_ex) / 3.0;
                }
                out[dofs[i]] += w_surf * v;
                // boundary penalties on the exact traces
                let pen = (je.u[0] * jv.u[0] + je.u[1] * jv.u[1]) / len
                    + je.w * jv.w / len.powi(3)
                    + if be.marker == Marker::D { dn_w_ex * dn_z / len } else { 0.0 };
                out[dofs[i]] += w_coord * c_pen * pen;
            }
        }
    }
    Ok(out)
}

struct ExactTraces {
    rho: Sym2,
    q: Sym2,
    x_tr: [[f64; 2]; 2],
    r: [f64; 2],
    drho: [Sym2; 2],
}

impl ExactTraces {
    fn new(gd: &GeomDeriv, e4: &Tensor4, j: &DispJet) -> Self {
        let g = &gd.g;
        let gam = membrane_strain(g, j);
        let rho = bending_strain(g, j);
        let q = e4.apply(&rho);
        let eg = e4.apply(&gam);
        let mut x_tr = [[0.0; 2]; 2];
        for a in 0..2 {
            for gg in 0..2 {
                let mut s = eg.get(a, gg);
                for b in 0..2 {
                    s += 2.0 * q.get(gg, b) * g.b_mix[a][b];
                }
                x_tr[a][gg] = s;
            }
        }
        let rc = rho_cov1(gd, j);
        let mut r = [0.0; 2];
        for a in 0..2 {
            for b in 0..2 {
                r[a] += e4.apply(&rc[b]).get(a, b);
            }
        }
        let drho = rho_partials(gd, j);
        ExactTraces { rho, q, x_tr, r, drho }
    }
}

/// `b(M_exact; φ_i)` for every displacement basis function.
pub fn apply_b_stress(
    mesh: &Mesh,
    chart: &Chart,
    spaces: &FeSpaces,
    m_fn: &dyn Fn([f64; 2]) -> Sym2,
) -> Result<Vec<f64>> {
    let dm = &spaces.dof_map;
    let trule = tri_rule(spaces.qdeg)?;
    let erule = edge_rule(spaces.qdeg)?;
    let mut out = vec![0.0; dm.n_uw];
    for t in 0..mesh.triangles.len() {
        let dofs = side_dofs(dm, t);
        let quad = crate::basis::elem_quad(mesh, t, chart, &trule)?;
        for (qi, &x) in quad.points.iter().enumerate() {
            let g = eval_geometry(chart, x)?;
            let m = m_fn(x);
            let jets = basis_jets(spaces, t, x);
            for (i, jv) in jets.iter().enumerate() {
                let gam_v = membrane_strain(&g, jv);
                out[dofs[i]] += quad.w_surf[qi] * m.dot(&gam_v);
            }
        }
    }
    for ie in &mesh.interior_edges {
        let len = mesh.edge_length(ie.v);
        for (tq, wq) in erule.points.iter().zip(&erule.weights) {
            let x = mesh.edge_point(ie.v, *tq);
            let g = eval_geometry(chart, x)?;
            let m = m_fn(x);
            let fr0 = EdgeFrame::from_geometry(&g, edge_tangent(mesh, ie.v, ie.tri[0]));
            let w_surf = wq * len * fr0.w_e;
            for side in 0..2 {
                let n_cov = if side == 0 {
                    fr0.n_cov
                } else {
                    [-fr0.n_cov[0], -fr0.n_cov[1]]
                };
                let dofs = side_dofs(dm, ie.tri[side]);
                let jets = basis_jets(spaces, ie.tri[side], x);
                for (i, jv) in jets.iter().enumerate() {
                    out[dofs[i]] -= w_surf * m.quad(jv.u, n_cov);
                }
            }
        }
    }
    for be in &mesh.boundary_edges {
        if be.marker == Marker::F {
            continue;
        }
        let len = mesh.edge_length(be.v);
        let dofs = side_dofs(dm, be.tri);
        for (tq, wq) in erule.points.iter().zip(&erule.weights) {
            let x = mesh.edge_point(be.v, *tq);
            let g = eval_geometry(chart, x)?;
            let m = m_fn(x);
            let fr = EdgeFrame::from_geometry(&g, edge_tangent(mesh, be.v, be.tri));
            let w_surf = wq * len * fr.w_e;
            let jets = basis_jets(spaces, be.tri, x);
            for (i, jv) in jets.iter().enumerate() {
                out[dofs[i]] -= w_surf * m.quad(jv.u, fr.n_cov);
            }
        }
    }
    Ok(out)
}

/// `b(N_j; u_exact, w_exact)` for every stress basis function.
pub fn apply_b_disp(
    mesh: &Mesh,
    chart: &Chart,
    spaces: &FeSpaces,
    exact: &ExactSolution,
) -> Result<Vec<f64>> {
    let dm = &spaces.dof_map;
    let trule = tri_rule(spaces.qdeg)?;
    let erule = edge_rule(spaces.qdeg)?;
    let mut out = vec![0.0; dm.n_m];
    for t in 0..mesh.triangles.len() {
        let tric = mesh.tri_coords(t);
        let verts = mesh.triangles[t];
        let lams = crate::basis::barycentric_polys(&tric, mesh.tri_centroid(t), 1.0);
        let quad = crate::basis::elem_quad(mesh, t, chart, &trule)?;
        for (qi, &x) in quad.points.iter().enumerate() {
            let g = eval_geometry(chart, x)?;
            let gam = membrane_strain(&g, &exact.jet(x));
            for (vi, lam) in lams.iter().enumerate() {
                let h = lam.eval(x);
                for p in 0..3 {
                    out[dm.m_index(verts[vi], p)] +=
                        quad.w_surf[qi] * h * Sym2::unit(p).dot(&gam);
                }
            }
        }
    }
    // interior-edge jumps of the exact field vanish; S/D traces remain
    for be in &mesh.boundary_edges {
        if be.marker == Marker::F {
            continue;
        }
        let len = mesh.edge_length(be.v);
        for (tq, wq) in erule.points.iter().zip(&erule.weights) {
            let x = mesh.edge_point(be.v, *tq);
            let g = eval_geometry(chart, x)?;
            let fr = EdgeFrame::from_geometry(&g, edge_tangent(mesh, be.v, be.tri));
            let u = (exact.u)(x);
            let w_surf = wq * len * fr.w_e;
            let hat = [1.0 - tq, *tq];
            for (end, &vtx) in be.v.iter().enumerate() {
                for p in 0..3 {
                    out[dm.m_index(vtx, p)] -=
                        w_surf * hat[end] * Sym2::unit(p).quad(u, fr.n_cov);
                }
            }
        }
    }
    Ok(out)
}

/// `c(M_exact, N_j)` for every stress basis function.
pub fn apply_c_stress(
    mesh: &Mesh,
    chart: &Chart,
    spaces: &FeSpaces,
    moduli: &ElasticModuli,
    m_fn: &dyn Fn([f64; 2]) -> Sym2,
) -> Result<Vec<f64>> {
    let dm = &spaces.dof_map;
    let trule = tri_rule(spaces.qdeg)?;
    let mut out = vec![0.0; dm.n_m];
    for t in 0..mesh.triangles.len() {
        let tric = mesh.tri_coords(t);
        let verts = mesh.triangles[t];
        let lams = crate::basis::barycentric_polys(&tric, mesh.tri_centroid(t), 1.0);
        let quad = crate::basis::elem_quad(mesh, t, chart, &trule)?;
        for (qi, &x) in quad.points.iter().enumerate() {
            let g = eval_geometry(chart, x)?;
            let comp = compliance_tensor(&g, moduli);
            let cm = comp.apply(&m_fn(x));
            for (vi, lam) in lams.iter().enumerate() {
                let h = lam.eval(x);
                for p in 0..3 {
                    out[dm.m_index(verts[vi], p)] +=
                        quad.w_surf[qi] * h * Sym2::unit(p).dot(&cm);
                }
            }
        }
    }
    Ok(out)
}

/// Normalized residual of the exact triple in the discrete equations:
/// `‖(a(ex;φ)+b(M;φ)-f(φ), b(N;ex)-ε²c(M,N))‖₂ / ‖f‖₂`.
pub fn consistency_residual(
    case: &ManufacturedCase,
    mesh: &Mesh,
    spaces: &FeSpaces,
    c_pen: f64,
) -> Result<f64> {
    let chart = &case.chart;
    let f = crate::assemble::assemble_load(mesh, chart, spaces, case)?;
    let mut r1 = apply_a_exact(mesh, chart, spaces, &case.moduli, c_pen, &case.exact)?;
    let bm = apply_b_stress(mesh, chart, spaces, &|x| case.m_exact(x))?;
    for i in 0..r1.len() {
        r1[i] += bm[i] - f[i];
    }
    let mut r2 = apply_b_disp(mesh, chart, spaces, &case.exact)?;
    let cm = apply_c_stress(mesh, chart, spaces, &case.moduli, &|x| case.m_exact(x))?;
    let e2 = case.eps * case.eps;
    for i in 0..r2.len() {
        r2[i] -= e2 * cm[i];
    }
    let rnorm = (r1.iter().map(|v| v * v).sum::<f64>()
        + r2.iter().map(|v| v * v).sum::<f64>())
    .sqrt();
    let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(rnorm / fnorm.max(1e-300))
}

/// Defect of the key orthogonality: `max_j |b(N_j; u-u^I, w-w^I)| / ‖N_j‖`.
pub fn key_orthogonality_check(
    mesh: &Mesh,
    chart: &Chart,
    spaces: &FeSpaces,
    exact: &ExactSolution,
) -> Result<f64> {
    let dm = &spaces.dof_map;
    let interp = interpolate_all(mesh, chart, spaces, exact)?;
    let trule = tri_rule(spaces.qdeg)?;
    let erule = edge_rule(spaces.qdeg)?;
    let fe = FeDisp { spaces, uw: &interp };
    let mut b_action = vec![0.0; dm.n_m];

    for t in 0..mesh.triangles.len() {
        let tric = mesh.tri_coords(t);
        let verts = mesh.triangles[t];
        let lams = crate::basis::barycentric_polys(&tric, mesh.tri_centroid(t), 1.0);
        let quad = crate::basis::elem_quad(mesh, t, chart, &trule)?;
        for (qi, &x) in quad.points.iter().enumerate() {
            let g = eval_geometry(chart, x)?;
            let jd = diff_jet(&fe, exact, t, x);
            let gam = membrane_strain(&g, &jd);
            for (vi, lam) in lams.iter().enumerate() {
                let h = lam.eval(x);
                for p in 0..3 {
                    b_action[dm.m_index(verts[vi], p)] +=
                        quad.w_surf[qi] * h * Sym2::unit(p).dot(&gam);
                }
            }
        }
    }
    for ie in &mesh.interior_edges {
        let len = mesh.edge_length(ie.v);
        for (tq, wq) in erule.points.iter().zip(&erule.weights) {
            let x = mesh.edge_point(ie.v, *tq);
            let g = eval_geometry(chart, x)?;
            let fr0 = EdgeFrame::from_geometry(&g, edge_tangent(mesh, ie.v, ie.tri[0]));
            let w_surf = wq * len * fr0.w_e;
            let hat = [1.0 - tq, *tq];
            for side in 0..2 {
                let n_cov = if side == 0 {
                    fr0.n_cov
                } else {
                    [-fr0.n_cov[0], -fr0.n_cov[1]]
                };
                let jd = diff_jet(&fe, exact, ie.tri[side], x);
                for (end, &vtx) in ie.v.iter().enumerate() {
                    for p in 0..3 {
                        b_action[dm.m_index(vtx, p)] -=
                            w_surf * hat[end] * Sym2::unit(p).quad(jd.u, n_cov);
                    }
                }
            }
        }
    }
    for be in &mesh.boundary_edges {
        if be.marker == Marker::F {
            continue;
        }
        let len = mesh.edge_length(be.v);
        for (tq, wq) in erule.points.iter().zip(&erule.weights) {
            let x = mesh.edge_point(be.v, *tq);
            let g = eval_geometry(chart, x)?;
            let fr = EdgeFrame::from_geometry(&g, edge_tangent(mesh, be.v, be.tri));
            let w_surf = wq * len * fr.w_e;
            let hat = [1.0 - tq, *tq];
            let jd = diff_jet(&fe, exact, be.tri, x);
            for (end, &vtx) in be.v.iter().enumerate() {
                for p in 0..3 {
                    b_action[dm.m_index(vtx, p)] -=
                        w_surf * hat[end] * Sym2::unit(p).quad(jd.u, fr.n_cov);
                }
            }
        }
    }

    // normalize per nodal basis function
    let (_, _, gv) = crate::assemble::assemble_norm_grams(mesh, chart, spaces)?;
    let gvd = gv.to_dense();
    let mut worst: f64 = 0.0;
    for j in 0..dm.n_m {
        let norm = gvd[(j, j)].sqrt();
        if norm > 0.0 {
            worst = worst.max(b_action[j].abs() / norm);
        }
    }
    Ok(worst)
}

fn diff_jet(fe: &FeDisp, exact: &ExactSolution, t: usize, x: [f64; 2]) -> DispJet {
    let a = fe.jet(t, x);
    let b = exact.jet(x);
    DispJet {
        u: [a.u[0] - b.u[0], a.u[1] - b.u[1]],
        du: [
            [a.du[0][0] - b.du[0][0], a.du[0][1] - b.du[0][1]],
            [a.du[1][0] - b.du[1][0], a.du[1][1] - b.du[1][1]],
        ],
        d2u: [a.d2u[0] - b.d2u[0], a.d2u[1] - b.d2u[1]],
        w: a.w - b.w,
        dw: [a.dw[0] - b.dw[0], a.dw[1] - b.dw[1]],
        d2w: a.d2w - b.d2w,
        d3w: [
            a.d3w[0] - b.d3w[0],
            a.d3w[1] - b.d3w[1],
            a.d3w[2] - b.d3w[2],
            a.d3w[3] - b.d3w[3],
        ],
    }
}

/// Error measures of a computed solution against a manufactured case.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub h_max: f64,
    pub n_dofs: usize,
    pub err_hh: f64,
    pub err_ah: f64,
    pub err_u_l2: f64,
    pub err_w_l2: f64,
    pub err_m_l2: f64,
    pub err_m_weak: f64,
    pub geometry_factor: f64,
    pub solve_seconds: f64,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str =
        "h,n_dofs,err_hh,err_ah,err_u_l2,err_w_l2,err_m_l2,err_m_weak,geometry_factor,solve_seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.8e},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.3}",
            self.h_max,
            self.n_dofs,
            self.err_hh,
            self.err_ah,
            self.err_u_l2,
            self.err_w_l2,
            self.err_m_l2,
            self.err_m_weak,
            self.geometry_factor,
            self.solve_seconds
        )
    }
}

/// Error norms of a solve, measured at quadrature degree 12.
pub fn error_report(
    mesh: &Mesh,
    spaces: &FeSpaces,
    case: &ManufacturedCase,
    sol: &FieldCoefficients,
    b: &Csr,
    g_hh: &Csr,
    solve_seconds: f64,
) -> Result<ErrorReport> {
    let chart = &case.chart;
    let qdeg = crate::quadrature::MAX_DEGREE;
    let diff = DiffField { fe: FeDisp { spaces, uw: &sol.uw }, exact: &case.exact };
    let err_hh = hh_norm_sq(mesh, chart, &diff, qdeg)?.sqrt();
    let err_ah = ah_norm_sq(mesh, chart, &diff, qdeg)?.sqrt();

    // plain per-field L² errors
    let trule = tri_rule(qdeg)?;
    let mut ul2 = 0.0;
    let mut wl2 = 0.0;
    for t in 0..mesh.triangles.len() {
        let quad = crate::basis::elem_quad(mesh, t, chart, &trule)?;
        for (qi, &x) in quad.points.iter().enumerate() {
            let j = diff.jet(t, x);
            ul2 += quad.w_coord[qi] * (j.u[0] * j.u[0] + j.u[1] * j.u[1]);
            wl2 += quad.w_coord[qi] * j.w * j.w;
        }
    }

    let err_m_l2 = vh_error(mesh, &sol.m, &|x| case.m_exact(x), qdeg)?;
    // weak seminorm of M^h - M^I with the projected exact stress
    let m_proj = project_stress(mesh, chart, &|x| case.m_exact(x), spaces.qdeg)?;
    let d: Vec<f64> = sol.m.iter().zip(&m_proj).map(|(a, b)| a - b).collect();
    let fact = LdlFactor::new(g_hh, crate::sparse::identity_perm(g_hh.nrows))?;
    let err_m_weak = weak_stress_seminorm(&d, b, &fact);

    let geometry_factor = geometry_factor(mesh, chart, case.eps)?;
    Ok(ErrorReport {
        h_max: mesh.max_h(),
        n_dofs: spaces.dof_map.n_uw + spaces.dof_map.n_m,
        err_hh,
        err_ah,
        err_u_l2: ul2.sqrt(),
        err_w_l2: wl2.sqrt(),
        err_m_l2,
        err_m_weak,
        geometry_factor,
        solve_seconds,
    })
}

/// The geometry bracket `1 + ε⁻¹ max_τ (h³|Γ|_{2,∞,τ} + h⁵|b|_{3,∞,τ})`.
pub fn geometry_factor(mesh: &Mesh, chart: &Chart, eps: f64) -> Result<f64> {
    Ok(1.0 + geometry_indicator(mesh, chart, eps)?.0)
}

/// Per-element geometry indicator; returns the max `ε⁻¹(h³|Γ| + h⁵|b|)`
/// and its arg-max element.
pub fn geometry_indicator(mesh: &Mesh, chart: &Chart, eps: f64) -> Result<(f64, usize)> {
    let mut worst = 0.0;
    let mut arg = 0;
    for t in 0..mesh.triangles.len() {
        let tri = mesh.tri_coords(t);
        let (g2, b3) = crate::geometry::geometry_seminorms(chart, &tri, 3)?;
        let h = mesh.h_tri[t];
        let v = (h.powi(3) * g2 + h.powi(5) * b3) / eps;
        if v > worst {
            worst = v;
            arg = t;
        }
    }
    Ok((worst, arg))
}

/// Gram-route `H_h` norm of an FE coefficient vector.
pub fn hh_norm_gram(g_hh: &Csr, x: &[f64]) -> f64 {
    let mut gx = vec![0.0; g_hh.nrows];
    g_hh.matvec(x, &mut gx);
    gx.iter().zip(x).map(|(p, q)| p * q).sum::<f64>().max(0.0).sqrt()
}
