//! Direct solution of the mixed saddle-point system and generalized
//! eigenvalue diagnostics.

use crate::assemble::AssembledSystem;
use crate::basis::DofMap;
use crate::mesh::Mesh;
use crate::sparse::{Csr, LdlFactor};
use crate::{Error, Result};

pub use crate::sparse::{dense_generalized_eigs, min_generalized_eig};

/// Coefficient vectors of a mixed solution: per-element displacement blocks
/// and the shared nodal stress block.
#[derive(Clone, Debug)]
pub struct FieldCoefficients {
    pub uw: Vec<f64>,
    pub m: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Proceed when the factorization inertia flags a loss of coercivity.
    pub allow_indefinite: bool,
    pub max_refine_steps: usize,
    pub target_rel_residual: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { allow_indefinite: false, max_refine_steps: 3, target_rel_residual: 1e-9 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveReport {
    pub rel_residual: f64,
    pub refine_steps: usize,
    /// Pivot signs matched (n_uw positive, n_m negative).
    pub inertia_ok: bool,
    pub factor_nnz: usize,
}

/// 2D anchor of every dof (element centroid for displacement dofs, vertex
/// position for stress dofs), used by the fill-reducing ordering.
pub fn dof_coords(mesh: &Mesh, dm: &DofMap) -> Vec<[f64; 2]> {
    let mut coords = vec![[0.0; 2]; dm.n_uw + dm.n_m];
    for t in 0..mesh.triangles.len() {
        let c = mesh.tri_centroid(t);
        let s = dm.u_ndof[t];
        for comp in 0..2 {
            for k in 0..s {
                coords[dm.u_index(t, comp, k)] = c;
            }
        }
        for k in 0..DofMap::W_NDOF {
            coords[dm.w_index(t, k)] = c;
        }
    }
    for (v, &p) in mesh.vertices.iter().enumerate() {
        for comp in 0..3 {
            coords[dm.n_uw + dm.m_index(v, comp)] = p;
        }
    }
    coords
}

/// Assembles the full symmetric block matrix `[[A, Bᵀ], [B, -ε²C]]`.
pub fn block_matrix(sys: &AssembledSystem) -> Csr {
    let n = sys.n_uw + sys.n_m;
    let mut trips =
        Vec::with_capacity(sys.a.nnz() + 2 * sys.b.nnz() + sys.c.nnz());
    for i in 0..sys.a.nrows {
        for k in sys.a.indptr[i]..sys.a.indptr[i + 1] {
            trips.push((i as u32, sys.a.indices[k], sys.a.values[k]));
        }
    }
    let off = sys.n_uw as u32;
    for m in 0..sys.b.nrows {
        for k in sys.b.indptr[m]..sys.b.indptr[m + 1] {
            let j = sys.b.indices[k];
            let v = sys.b.values[k];
            trips.push((off + m as u32, j, v));
            trips.push((j, off + m as u32, v));
        }
    }
    let e2 = sys.eps * sys.eps;
    for i in 0..sys.c.nrows {
        for k in sys.c.indptr[i]..sys.c.indptr[i + 1] {
            trips.push((off + i as u32, off + sys.c.indices[k], -e2 * sys.c.values[k]));
        }
    }
    // make sure every diagonal entry exists for the factorization
    for i in 0..n {
        trips.push((i as u32, i as u32, 0.0));
    }
    Csr::from_triplets(n, n, trips)
}

/// Solves the mixed system by sparse LDL^T with iterative refinement.
///
/// The factorization's pivot signs double as the coercivity self-check: a
/// coercive `A` gives exactly `n_uw` positive and `n_m` negative pivots,
/// anything else raises `CoercivityWarning` unless overridden.
pub fn solve_mixed(
    sys: &AssembledSystem,
    coords: Option<&[[f64; 2]]>,
    opts: &SolveOptions,
) -> Result<(FieldCoefficients, SolveReport)> {
    let n = sys.n_uw + sys.n_m;
    let k = block_matrix(sys);
    let perm = match coords {
        Some(c) => {
            assert_eq!(c.len(), n);
            crate::sparse::nested_dissection(&k, c)
        }
        None => crate::sparse::identity_perm(n),
    };
    let fact = LdlFactor::new(&k, perm)?;
    let inertia_ok = fact.n_pos == sys.n_uw && fact.n_neg == sys.n_m;
    if !inertia_ok && !opts.allow_indefinite {
        return Err(Error::CoercivityWarning(format!(
            "inertia ({}, {}) differs from ({}, {}); raise the penalty or override",
            fact.n_pos, fact.n_neg, sys.n_uw, sys.n_m
        )));
    }

    let mut rhs = vec![0.0; n];
    rhs[..sys.n_uw].copy_from_slice(&sys.f);
    let mut x = fact.solve(&rhs);
    let f_scale = sys.f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut steps = 0;
    let mut rel = f64::MAX;
    let mut r = vec![0.0; n];
    for _ in 0..=opts.max_refine_steps {
        k.matvec(&x, &mut r);
        for i in 0..n {
            r[i] = rhs[i] - r[i];
        }
        let rinf = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let xinf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = f_scale.max(k.max_abs() * xinf).max(1e-300);
        rel = rinf / scale;
        if rel <= opts.target_rel_residual {
            break;
        }
        if steps == opts.max_refine_steps {
            break;
        }
        let dx = fact.solve(&r);
        for i in 0..n {
            x[i] += dx[i];
        }
        steps += 1;
    }
    if rel > opts.target_rel_residual.max(1e-6) {
        return Err(Error::SingularSystem(format!(
            "iterative refinement stalled at relative residual {rel:e}"
        )));
    }
    let (uw, m) = x.split_at(sys.n_uw);
    Ok((
        FieldCoefficients { uw: uw.to_vec(), m: m.to_vec() },
        SolveReport { rel_residual: rel, refine_steps: steps, inertia_ok, factor_nnz: fact.l_nnz() },
    ))
}

/// Energy identity `xᵀAx + ε² mᵀCm = Fᵀx` for a computed solution, returned
/// as a relative defect.
pub fn energy_identity_defect(sys: &AssembledSystem, sol: &FieldCoefficients) -> f64 {
    let mut ax = vec![0.0; sys.n_uw];
    sys.a.matvec(&sol.uw, &mut ax);
    let xax: f64 = ax.iter().zip(&sol.uw).map(|(a, b)| a * b).sum();
    let mut cm = vec![0.0; sys.n_m];
    sys.c.matvec(&sol.m, &mut cm);
    let mcm: f64 = cm.iter().zip(&sol.m).map(|(a, b)| a * b).sum();
    let fx: f64 = sys.f.iter().zip(&sol.uw).map(|(a, b)| a * b).sum();
    let lhs = xax + sys.eps * sys.eps * mcm;
    (lhs - fx).abs() / lhs.abs().max(fx.abs()).max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemble::{assemble_system, ShellLoads, ZeroLoads};
    use crate::basis::build_spaces;
    use crate::geometry::ElasticModuli;
    use crate::mesh::{EdgeFrame, Marker, Mesh};
    use crate::Chart;
    use approx::assert_relative_eq;

    struct ConstPressure(f64);
    impl ShellLoads for ConstPressure {
        fn volume(&self, _: [f64; 2]) -> ([f64; 2], f64) {
            ([0.0; 2], self.0)
        }
        fn boundary(&self, _: [f64; 2], _: &EdgeFrame, _: Marker) -> ([f64; 2], f64, f64) {
            ([0.0; 2], 0.0, 0.0)
        }
    }

    #[test]
    fn zero_loads_zero_solution() {
        let mesh = Mesh::unit_square(2, [Marker::D; 4]);
        let chart = Chart::Plane;
        let spaces = build_spaces(&mesh, &chart, 6).unwrap();
        let moduli = ElasticModuli::new(1.0, 1.0);
        let sys =
            assemble_system(&mesh, &chart, &spaces, &moduli, 0.1, None, &ZeroLoads).unwrap();
        let (sol, rep) =
            solve_mixed(&sys, None, &SolveOptions::default()).unwrap();
        assert!(rep.inertia_ok);
        assert!(sol.uw.iter().all(|&v| v == 0.0));
        assert!(sol.m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clamped_plate_matches_dense_solve() {
        let mesh = Mesh::unit_square(2, [Marker::D; 4]);
        let chart = Chart::Plane;
        let spaces = build_spaces(&mesh, &chart, 6).unwrap();
        let moduli = ElasticModuli::new(1.0, 0.5);
        let sys = assemble_system(&mesh, &chart, &spaces, &moduli, 1.0, None, &ConstPressure(1.0))
            .unwrap();
        let coords = dof_coords(&mesh, &spaces.dof_map);
        let (sol, rep) = solve_mixed(&sys, Some(&coords), &SolveOptions::default()).unwrap();
        assert!(rep.rel_residual <= 1e-9, "residual {}", rep.rel_residual);
        assert!(rep.inertia_ok);

        // dense oracle on the same block matrix
        let k = block_matrix(&sys).to_dense();
        let mut rhs = nalgebra::DVector::zeros(sys.n_uw + sys.n_m);
        for (i, v) in sys.f.iter().enumerate() {
            rhs[i] = *v;
        }
        let xd = k.lu().solve(&rhs).unwrap();
        let xscale = xd.amax();
        for i in 0..sys.n_uw {
            assert_relative_eq!(sol.uw[i], xd[i], epsilon = 1e-9 * xscale);
        }
        for i in 0..sys.n_m {
            assert_relative_eq!(sol.m[i], xd[sys.n_uw + i], epsilon = 1e-9 * xscale);
        }
        // energy identity
        assert!(energy_identity_defect(&sys, &sol) <= 1e-8);
    }

    #[test]
    fn solution_invariant_under_renumbering() {
        // same mesh with triangles listed in a different order: the w field
        // must agree pointwise
        let mesh = Mesh::unit_square(2, [Marker::D; 4]);
        let mut tris = mesh.triangles.clone();
        tris.reverse();
        let mut markers = std::collections::HashMap::new();
        for be in &mesh.boundary_edges {
            markers.insert((be.v[0].min(be.v[1]), be.v[0].max(be.v[1])), be.marker);
        }
        let mesh2 = Mesh::from_raw(mesh.vertices.clone(), tris, &markers).unwrap();
        let chart = Chart::Plane;
        let moduli = ElasticModuli::new(1.0, 0.5);
        let mut w_at = Vec::new();
        for m in [&mesh, &mesh2] {
            let spaces = build_spaces(m, &chart, 6).unwrap();
            let sys =
                assemble_system(m, &chart, &spaces, &moduli, 1.0, None, &ConstPressure(1.0))
                    .unwrap();
            let coords = dof_coords(m, &spaces.dof_map);
            let (sol, _) = solve_mixed(&sys, Some(&coords), &SolveOptions::default()).unwrap();
            // evaluate w at a probe point inside some element
            let probe = [0.4, 0.3];
            let t = (0..m.triangles.len())
                .find(|&t| {
                    let tc = m.tri_coords(t);
                    let lams = crate::basis::barycentric_polys(&tc, [0.0, 0.0], 1.0);
                    lams.iter().all(|l| l.eval(probe) >= -1e-12)
                })
                .unwrap();
            let mut w = 0.0;
            for k in 0..crate::basis::DofMap::W_NDOF {
                w += sol.uw[spaces.dof_map.w_index(t, k)] * spaces.w_basis[t][k].eval(probe);
            }
            w_at.push(w);
        }
        assert_relative_eq!(w_at[0], w_at[1], max_relative = 1e-10);
    }
}
