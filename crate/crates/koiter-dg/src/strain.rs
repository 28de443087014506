//! Pointwise strain kernels: membrane strain `γ_αβ`, bending strain
//! `ρ_αβ`, and their first and second covariant derivatives, for any field
//! that can report its displacement jet at a point.

use crate::basis::Poly2;
use crate::chart::Chart;
use crate::geometry::{fd_step, GeomDeriv, GeometryEval};
use crate::tensor::Sym2;
use crate::Result;

/// Displacement data at one point: tangential components `u_α` through
/// second derivatives and deflection `w` through third derivatives.
#[derive(Clone, Copy, Debug, Default)]
pub struct DispJet {
    pub u: [f64; 2],
    /// `∂_β u_α`, indexed `[α][β]`.
    pub du: [[f64; 2]; 2],
    /// `∂²_{βγ} u_α`, packed per component.
    pub d2u: [Sym2; 2],
    pub w: f64,
    pub dw: [f64; 2],
    pub d2w: Sym2,
    /// `∂³ w` packed as (xxx, xxy, xyy, yyy).
    pub d3w: [f64; 4],
}

impl DispJet {
    #[inline]
    pub fn d3w_get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.d3w[a + b + c]
    }
}

/// A displacement field evaluable anywhere (exact solutions, local
/// polynomials, differences).
pub trait ShellField {
    fn jet(&self, x: [f64; 2]) -> DispJet;
}

/// Local polynomial field `(u_1, u_2, w)` on one element.
pub struct PolyField<'a> {
    pub u: [&'a Poly2; 2],
    pub w: &'a Poly2,
}

impl ShellField for PolyField<'_> {
    fn jet(&self, x: [f64; 2]) -> DispJet {
        let ju = [self.u[0].jet(x), self.u[1].jet(x)];
        let jw = self.w.jet(x);
        DispJet {
            u: [ju[0].v, ju[1].v],
            du: [ju[0].d1, ju[1].d1],
            d2u: [ju[0].d2, ju[1].d2],
            w: jw.v,
            dw: jw.d1,
            d2w: jw.d2,
            d3w: jw.d3,
        }
    }
}

/// Covariant derivative of the tangential displacement:
/// `u_{α|β} = ∂_β u_α - Γ^γ_{αβ} u_γ`.
pub fn u_cov(g: &GeometryEval, j: &DispJet) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            out[a][b] =
                j.du[a][b] - (0..2).map(|gg| g.chr[gg].get(a, b) * j.u[gg]).sum::<f64>();
        }
    }
    out
}

/// Membrane strain `γ_αβ = (u_{α|β}+u_{β|α})/2 - b_αβ w`.
pub fn membrane_strain(g: &GeometryEval, j: &DispJet) -> Sym2 {
    let uc = u_cov(g, j);
    Sym2::from_fn(|a, b| 0.5 * (uc[a][b] + uc[b][a]) - g.b.get(a, b) * j.w)
}

/// Bending strain
/// `ρ_αβ = ∂²_{αβ}w - Γ^γ_{αβ}∂_γw + b^γ_{α|β}u_γ + b^γ_α u_{γ|β} + b^γ_β u_{γ|α} - c_αβ w`.
pub fn bending_strain(g: &GeometryEval, j: &DispJet) -> Sym2 {
    let uc = u_cov(g, j);
    Sym2::from_fn(|a, b| {
        let mut s = j.d2w.get(a, b) - g.c3.get(a, b) * j.w;
        for gg in 0..2 {
            s -= g.chr[gg].get(a, b) * j.dw[gg];
            s += g.b_mix_cov[gg][a][b] * j.u[gg];
            s += g.b_mix[gg][a] * uc[gg][b] + g.b_mix[gg][b] * uc[gg][a];
        }
        s
    })
}

/// Full coordinate partial `∂_γ ρ_αβ`, one packed tensor per `γ`.
///
/// Needs the extended geometry bundle for `∂_γ b^λ_{α|β}`.
pub fn rho_partials(gd: &GeomDeriv, j: &DispJet) -> [Sym2; 2] {
    let g = &gd.g;
    let uc = u_cov(g, j);
    // ∂_γ u_{λ|β} = ∂²_{βγ} u_λ - ∂_γΓ^τ_{λβ} u_τ - Γ^τ_{λβ} ∂_γ u_τ
    let mut duc = [[[0.0; 2]; 2]; 2]; // [γ][λ][β]
    for gg in 0..2 {
        for l in 0..2 {
            for b in 0..2 {
                let mut s = j.d2u[l].get(b, gg);
                for t in 0..2 {
                    s -= g.d_chr[gg][t].get(l, b) * j.u[t];
                    s -= g.chr[t].get(l, b) * j.du[t][gg];
                }
                duc[gg][l][b] = s;
            }
        }
    }
    std::array::from_fn(|gg| {
        Sym2::from_fn(|a, b| {
            let mut s = j.d3w_get(a, b, gg);
            s -= g.d_c3[gg].get(a, b) * j.w + g.c3.get(a, b) * j.dw[gg];
            for l in 0..2 {
                s -= g.d_chr[gg][l].get(a, b) * j.dw[l] + g.chr[l].get(a, b) * j.d2w.get(l, gg);
                s += gd.d_b_mix_cov[gg][l][a][b] * j.u[l] + g.b_mix_cov[l][a][b] * j.du[l][gg];
                s += g.d_b_mix[gg][l][a] * uc[l][b] + g.b_mix[l][a] * duc[gg][l][b];
                s += g.d_b_mix[gg][l][b] * uc[l][a] + g.b_mix[l][b] * duc[gg][l][a];
            }
            s
        })
    })
}

/// First covariant derivative of the bending strain,
/// `ρ_{αβ|γ} = ∂_γ ρ_αβ - Γ^λ_{γα} ρ_λβ - Γ^τ_{γβ} ρ_ατ`, per `γ`.
pub fn rho_cov1(gd: &GeomDeriv, j: &DispJet) -> [Sym2; 2] {
    let rho = bending_strain(&gd.g, j);
    let dp = rho_partials(gd, j);
    cov1_correct(&gd.g, &rho, &dp)
}

/// First covariant derivative of the membrane strain, per `γ` (analytic).
pub fn gamma_cov1(g: &GeometryEval, j: &DispJet) -> [Sym2; 2] {
    let gam = membrane_strain(g, j);
    let mut duc = [[[0.0; 2]; 2]; 2];
    for gg in 0..2 {
        for l in 0..2 {
            for b in 0..2 {
                let mut s = j.d2u[l].get(b, gg);
                for t in 0..2 {
                    s -= g.d_chr[gg][t].get(l, b) * j.u[t];
                    s -= g.chr[t].get(l, b) * j.du[t][gg];
                }
                duc[gg][l][b] = s;
            }
        }
    }
    let dp: [Sym2; 2] = std::array::from_fn(|gg| {
        Sym2::from_fn(|a, b| {
            0.5 * (duc[gg][a][b] + duc[gg][b][a])
                - g.d_b[gg].get(a, b) * j.w
                - g.b.get(a, b) * j.dw[gg]
        })
    });
    cov1_correct(g, &gam, &dp)
}

/// Applies the covariant correction to coordinate partials of a symmetric
/// covariant 2-tensor: `t_{αβ|γ} = ∂_γ t_αβ - Γ^λ_{γα} t_λβ - Γ^τ_{γβ} t_ατ`.
fn cov1_correct(g: &GeometryEval, t: &Sym2, dp: &[Sym2; 2]) -> [Sym2; 2] {
    std::array::from_fn(|gg| {
        Sym2::from_fn(|a, b| {
            let mut s = dp[gg].get(a, b);
            for l in 0..2 {
                s -= g.chr[l].get(gg, a) * t.get(l, b);
                s -= g.chr[l].get(gg, b) * t.get(a, l);
            }
            s
        })
    })
}

/// Covariant derivative of a symmetric contravariant 2-tensor field (the
/// membrane stress): `σ^{αβ}|_γ = ∂_γ σ^{αβ} + Γ^α_{γλ} σ^{λβ} + Γ^β_{γτ} σ^{ατ}`.
pub fn stress_cov1(g: &GeometryEval, s: &Sym2, dp: &[Sym2; 2]) -> [Sym2; 2] {
    std::array::from_fn(|gg| {
        Sym2::from_fn(|a, b| {
            let mut v = dp[gg].get(a, b);
            for l in 0..2 {
                v += g.chr[a].get(gg, l) * s.get(l, b);
                v += g.chr[b].get(gg, l) * s.get(a, l);
            }
            v
        })
    })
}

/// Second covariant derivative `ρ_{αβ|γδ}`, indexed `[γ][δ]`.
///
/// The outer coordinate derivative of the `ρ_{αβ|γ}` field is a
/// Richardson-extrapolated central difference; the Christoffel corrections
/// are applied at the center point:
/// `ρ_{αβ|γδ} = ∂_δ(ρ_{αβ|γ}) - Γ^τ_{αδ}ρ_{τβ|γ} - Γ^τ_{βδ}ρ_{ατ|γ} - Γ^τ_{γδ}ρ_{αβ|τ}`.
pub fn rho_cov2(chart: &Chart, field: &dyn ShellField, x: [f64; 2]) -> Result<[[Sym2; 2]; 2]> {
    let gd = GeomDeriv::new(chart, x)?;
    let rc = rho_cov1(&gd, &field.jet(x));
    let h = fd_step(x);
    let eval = |y: [f64; 2]| -> Result<[Sym2; 2]> {
        let gd = GeomDeriv::new(chart, y)?;
        Ok(rho_cov1(&gd, &field.jet(y)))
    };
    let mut out = [[Sym2::ZERO; 2]; 2];
    for dl in 0..2 {
        let at = |s: f64| -> Result<[Sym2; 2]> {
            let mut y = x;
            y[dl] += s;
            eval(y)
        };
        let (p1, m1) = (at(h)?, at(-h)?);
        let (p2, m2) = (at(0.5 * h)?, at(-0.5 * h)?);
        for gg in 0..2 {
            let mut d = Sym2::ZERO;
            for s in 0..3 {
                let coarse = (p1[gg].slot(s) - m1[gg].slot(s)) / (2.0 * h);
                let fine = (p2[gg].slot(s) - m2[gg].slot(s)) / h;
                *d.slot_mut(s) = (4.0 * fine - coarse) / 3.0;
            }
            // christoffel corrections at the center
            let g = &gd.g;
            let corr = Sym2::from_fn(|a, b| {
                let mut s = d.get(a, b);
                for t in 0..2 {
                    s -= g.chr[t].get(a, dl) * rc[gg].get(t, b);
                    s -= g.chr[t].get(b, dl) * rc[gg].get(a, t);
                    s -= g.chr[t].get(gg, dl) * rc[t].get(a, b);
                }
                s
            });
            out[gg][dl] = corr;
        }
    }
    Ok(out)
}
