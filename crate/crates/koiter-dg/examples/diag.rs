use koiter_dg::assemble::basis_jets;
use koiter_dg::basis::build_spaces;
use koiter_dg::geometry::*;
use koiter_dg::mesh::{EdgeFrame, Marker, Mesh, EDGE_VERTS};
use koiter_dg::strain::*;
use koiter_dg::tensor::Sym2;
use koiter_dg::*;

fn main() {
    let mesh = Mesh::unit_square(1, [Marker::D, Marker::F, Marker::S, Marker::S]);
    let chart = Chart::Sphere { radius: 2.0, lat0: 0.9 };
    let spaces = build_spaces(&mesh, &chart, 10).unwrap();
    let moduli = ElasticModuli::new(1.0, 1.0);
    let be = mesh.boundary_edges.iter().find(|b| b.marker == Marker::D).unwrap();
    let tv = mesh.triangles[be.tri];
    let mut a = be.v[0]; let mut b = be.v[1];
    for ev in &EDGE_VERTS {
        if tv[ev[0]] == be.v[1] && tv[ev[1]] == be.v[0] { a = be.v[1]; b = be.v[0]; }
    }
    let pa = mesh.vertices[a]; let pb = mesh.vertices[b];
    let l = ((pb[0]-pa[0]).powi(2) + (pb[1]-pa[1]).powi(2)).sqrt();
    let tbar = [(pb[0]-pa[0])/l, (pb[1]-pa[1])/l];
    for k in [3usize, 9, 20] {
        let scalar = |s: f64| -> f64 {
            let x = mesh.edge_point(be.v, s);
            let g = eval_geometry(&chart, x).unwrap();
            let fr = EdgeFrame::from_geometry(&g, tbar);
            let e4 = elastic_tensor(&g, &moduli);
            let rho = bending_strain(&g, &basis_jets(&spaces, be.tri, x)[k]);
            e4.apply(&rho).quad(fr.s_cov, fr.n_cov)
        };
        let s0 = 0.4;
        let len = mesh.edge_length(be.v);
        let x = mesh.edge_point(be.v, s0);
        let gd = GeomDeriv::new(&chart, x).unwrap();
        let fr = EdgeFrame::from_geometry(&gd.g, tbar);
        let e4 = elastic_tensor(&gd.g, &moduli);
        let de4 = elastic_tensor_deriv(&gd.g, &moduli, tbar);
        // analytic pieces inline (same as assembly's ds_traction)
        let t = fr.tbar;
        let dmetric = Sym2::from_fn(|a, b| {
            let mut s = 0.0;
            for gg in 0..2 { for ll in 0..2 {
                s += t[gg] * (gd.g.chr[ll].get(gg, a) * gd.g.metric.get(ll, b) + gd.g.chr[ll].get(gg, b) * gd.g.metric.get(a, ll));
            }}
            s
        });
        let sa_dot = t[0]*gd.g.d_sqrt_a[0] + t[1]*gd.g.d_sqrt_a[1];
        let we = fr.w_e;
        let we_dot = dmetric.quad(t, t)/(2.0*we);
        let dn = [fr.nbar[0]*(sa_dot*we - gd.g.sqrt_a*we_dot)/(we*we), fr.nbar[1]*(sa_dot*we - gd.g.sqrt_a*we_dot)/(we*we)];
        let mt = gd.g.metric.apply(t); let dmt = dmetric.apply(t);
        let ds = [(dmt[0]*we - mt[0]*we_dot)/(we*we), (dmt[1]*we - mt[1]*we_dot)/(we*we)];
        let jets = basis_jets(&spaces, be.tri, x);
        let rho = bending_strain(&gd.g, &jets[k]);
        let dr = rho_partials(&gd, &jets[k]);
        let drho_t = Sym2 {
            xx: t[0]*dr[0].xx + t[1]*dr[1].xx,
            yy: t[0]*dr[0].yy + t[1]*dr[1].yy,
            xy: t[0]*dr[0].xy + t[1]*dr[1].xy,
        };
        let d_q = de4.apply(&rho) + e4.apply(&drho_t);
        let q = e4.apply(&rho);
        let analytic = (d_q.quad(fr.s_cov, fr.n_cov) + q.quad(ds, fr.n_cov) + q.quad(fr.s_cov, dn)) / fr.w_e;
        let h = 1e-5;
        let fd = (scalar(s0 + h) - scalar(s0 - h)) / (2.0 * h) / (len * fr.w_e);
        println!("k={k}: analytic={analytic:.9} fd={fd:.9} diff={:.2e}", (analytic-fd).abs());
    }
}
