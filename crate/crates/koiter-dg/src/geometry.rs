//! Pointwise differential geometry of the mid-surface: metric, curvature,
//! Christoffel symbols and their derivatives, plus the elastic and compliance
//! tensors of the shell.

use crate::chart::Chart;
use crate::tensor::{Sym2, Tensor4};
use crate::{Error, Result};

/// Tolerance on `|a_1 x a_2|` below which a chart counts as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-14;

/// Constant Lamé coefficients of the shell material.
#[derive(Clone, Copy, Debug)]
pub struct ElasticModuli {
    pub mu: f64,
    pub lambda: f64,
}

impl ElasticModuli {
    pub fn new(mu: f64, lambda: f64) -> Self {
        assert!(mu > 0.0, "mu must be positive");
        assert!(lambda >= 0.0, "lambda must be nonnegative");
        ElasticModuli { mu, lambda }
    }
}

/// All geometric coefficients of the mid-surface at one coordinate point.
#[derive(Clone, Debug)]
pub struct GeometryEval {
    pub x: [f64; 2],
    /// Covariant basis `a_α = ∂_α φ`.
    pub a_vec: [[f64; 3]; 2],
    /// Unit normal `a_3 = (a_1 x a_2)/|a_1 x a_2|`.
    pub a3: [f64; 3],
    /// Metric `a_αβ`.
    pub metric: Sym2,
    /// Inverse metric `a^αβ`.
    pub metric_inv: Sym2,
    /// `√a = |a_1 x a_2|`.
    pub sqrt_a: f64,
    /// Curvature tensor `b_αβ = a_3 · ∂_β a_α`.
    pub b: Sym2,
    /// Mixed curvature `b^α_β = a^αγ b_γβ`, indexed `[α][β]`.
    pub b_mix: [[f64; 2]; 2],
    /// Third fundamental form `c_αβ = b^γ_α b_γβ`.
    pub c3: Sym2,
    /// Christoffel symbols `Γ^γ_αβ`, one packed (αβ) tensor per `γ`.
    pub chr: [Sym2; 2],
    /// `∂_δ Γ^γ_αβ`, indexed `[δ][γ]`.
    pub d_chr: [[Sym2; 2]; 2],
    /// `∂_δ b_αβ`, indexed `[δ]`.
    pub d_b: [Sym2; 2],
    /// Covariant derivative `b^γ_{α|β} = ∂_β b^γ_α + Γ^γ_{λβ} b^λ_α - Γ^τ_{αβ} b^γ_τ`,
    /// indexed `[γ][α][β]`.
    pub b_mix_cov: [[[f64; 2]; 2]; 2],
    /// `∂_δ a^αβ`, indexed `[δ]`.
    pub d_metric_inv: [Sym2; 2],
    /// `∂_δ √a = √a Γ^λ_{λδ}`.
    pub d_sqrt_a: [f64; 2],
    /// `∂_δ b^α_β`, indexed `[δ][α][β]`.
    pub d_b_mix: [[[f64; 2]; 2]; 2],
    /// `∂_δ c_αβ`, indexed `[δ]`.
    pub d_c3: [Sym2; 2],
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Evaluates every geometric coefficient of the chart at `x`.
pub fn eval_geometry(chart: &Chart, x: [f64; 2]) -> Result<GeometryEval> {
    let a_vec = [chart.d1(x, 0), chart.d1(x, 1)];
    let cr = cross(a_vec[0], a_vec[1]);
    let sqrt_a = dot(cr, cr).sqrt();
    if sqrt_a < DEGENERACY_TOL {
        return Err(Error::DegenerateChart(sqrt_a, x[0], x[1]));
    }
    let a3 = [cr[0] / sqrt_a, cr[1] / sqrt_a, cr[2] / sqrt_a];

    let metric = Sym2::from_fn(|a, b| dot(a_vec[a], a_vec[b]));
    let metric_inv = metric.inverse();

    // second derivatives ∂_α ∂_β φ
    let mut dd = [[[0.0; 3]; 2]; 2];
    for a in 0..2 {
        for b in a..2 {
            let v = chart.d2(x, a, b);
            dd[a][b] = v;
            dd[b][a] = v;
        }
    }

    let b = Sym2::from_fn(|a, bb| dot(a3, dd[a][bb]));
    let mut b_mix = [[0.0; 2]; 2];
    for a in 0..2 {
        for bb in 0..2 {
            b_mix[a][bb] = (0..2).map(|g| metric_inv.get(a, g) * b.get(g, bb)).sum();
        }
    }
    let c3 = Sym2::from_fn(|a, bb| (0..2).map(|g| b_mix[g][a] * b.get(g, bb)).sum());

    // Christoffel symbols of the first kind Γ_{δαβ} = a_δ · ∂_β a_α
    let chr_low = [
        Sym2::from_fn(|a, bb| dot(a_vec[0], dd[a][bb])),
        Sym2::from_fn(|a, bb| dot(a_vec[1], dd[a][bb])),
    ];
    let mut chr = [Sym2::ZERO; 2];
    for g in 0..2 {
        chr[g] = Sym2::from_fn(|a, bb| {
            (0..2).map(|d| metric_inv.get(g, d) * chr_low[d].get(a, bb)).sum()
        });
    }

    // ∂_δ a_αβ = a_{αδ,..}·a_β + a_α·∂_δ a_β
    let d_metric = [
        Sym2::from_fn(|a, bb| dot(dd[a][0], a_vec[bb]) + dot(a_vec[a], dd[bb][0])),
        Sym2::from_fn(|a, bb| dot(dd[a][1], a_vec[bb]) + dot(a_vec[a], dd[bb][1])),
    ];
    // ∂_δ a^αβ = -a^αγ (∂_δ a_γλ) a^λβ
    let mut d_metric_inv = [Sym2::ZERO; 2];
    for dl in 0..2 {
        d_metric_inv[dl] = Sym2::from_fn(|a, bb| {
            let mut s = 0.0;
            for g in 0..2 {
                for l in 0..2 {
                    s -= metric_inv.get(a, g) * d_metric[dl].get(g, l) * metric_inv.get(l, bb);
                }
            }
            s
        });
    }

    let d_sqrt_a = [
        sqrt_a * (chr[0].get(0, 0) + chr[1].get(1, 0)),
        sqrt_a * (chr[0].get(0, 1) + chr[1].get(1, 1)),
    ];

    // Weingarten: ∂_δ a_3 = -b^λ_δ a_λ
    let mut d_a3 = [[0.0; 3]; 2];
    for dl in 0..2 {
        for k in 0..3 {
            d_a3[dl][k] = -(0..2).map(|l| b_mix[l][dl] * a_vec[l][k]).sum::<f64>();
        }
    }

    let mut d_b = [Sym2::ZERO; 2];
    for dl in 0..2 {
        d_b[dl] =
            Sym2::from_fn(|a, bb| dot(d_a3[dl], dd[a][bb]) + dot(a3, chart.d3(x, a, bb, dl)));
    }

    let mut d_b_mix = [[[0.0; 2]; 2]; 2];
    for dl in 0..2 {
        for a in 0..2 {
            for bb in 0..2 {
                d_b_mix[dl][a][bb] = (0..2)
                    .map(|g| {
                        d_metric_inv[dl].get(a, g) * b.get(g, bb)
                            + metric_inv.get(a, g) * d_b[dl].get(g, bb)
                    })
                    .sum();
            }
        }
    }

    let mut b_mix_cov = [[[0.0; 2]; 2]; 2];
    for g in 0..2 {
        for a in 0..2 {
            for bb in 0..2 {
                let mut s = d_b_mix[bb][g][a];
                for l in 0..2 {
                    s += chr[g].get(l, bb) * b_mix[l][a];
                    s -= chr[l].get(a, bb) * b_mix[g][l];
                }
                b_mix_cov[g][a][bb] = s;
            }
        }
    }

    let mut d_c3 = [Sym2::ZERO; 2];
    for dl in 0..2 {
        d_c3[dl] = Sym2::from_fn(|a, bb| {
            (0..2)
                .map(|g| d_b_mix[dl][g][a] * b.get(g, bb) + b_mix[g][a] * d_b[dl].get(g, bb))
                .sum()
        });
    }

    // ∂_δ Γ^γ_αβ via the first-kind symbols
    let mut d_chr = [[Sym2::ZERO; 2]; 2];
    for dl in 0..2 {
        for g in 0..2 {
            d_chr[dl][g] = Sym2::from_fn(|a, bb| {
                let mut s = 0.0;
                for l in 0..2 {
                    let d_low = dot(dd[l][dl], dd[a][bb]) + dot(a_vec[l], chart.d3(x, a, bb, dl));
                    s += d_metric_inv[dl].get(g, l) * chr_low[l].get(a, bb)
                        + metric_inv.get(g, l) * d_low;
                }
                s
            });
        }
    }

    Ok(GeometryEval {
        x,
        a_vec,
        a3,
        metric,
        metric_inv,
        sqrt_a,
        b,
        b_mix,
        c3,
        chr,
        d_chr,
        d_b,
        b_mix_cov,
        d_metric_inv,
        d_sqrt_a,
        d_b_mix,
        d_c3,
    })
}

/// Elastic tensor `a^{αβγδ} = μ(a^{αγ}a^{βδ} + a^{βγ}a^{αδ}) + (2μλ/(2μ+λ)) a^{αβ}a^{γδ}`.
pub fn elastic_tensor(g: &GeometryEval, m: &ElasticModuli) -> Tensor4 {
    let ai = g.metric_inv;
    let c1 = 2.0 * m.mu * m.lambda / (2.0 * m.mu + m.lambda);
    let mu = m.mu;
    Tensor4::from_fn(|a, b, gg, d| {
        mu * (ai.get(a, gg) * ai.get(b, d) + ai.get(b, gg) * ai.get(a, d))
            + c1 * ai.get(a, b) * ai.get(gg, d)
    })
}

/// Compliance tensor
/// `a_{αβγδ} = (1/2μ)[ (a_{αδ}a_{βγ} + a_{βδ}a_{αγ})/2 - λ/(2μ+3λ) a_{αβ}a_{γδ} ]`.
pub fn compliance_tensor(g: &GeometryEval, m: &ElasticModuli) -> Tensor4 {
    let a = g.metric;
    let c1 = m.lambda / (2.0 * m.mu + 3.0 * m.lambda);
    let half_inv_mu = 0.5 / m.mu;
    Tensor4::from_fn(|al, b, gg, d| {
        half_inv_mu
            * (0.5 * (a.get(al, d) * a.get(b, gg) + a.get(b, d) * a.get(al, gg))
                - c1 * a.get(al, b) * a.get(gg, d))
    })
}

/// Derivative of the elastic tensor along a coordinate direction, from
/// `∂_δ a^{αβ}`.
pub fn elastic_tensor_deriv(g: &GeometryEval, m: &ElasticModuli, dir: [f64; 2]) -> Tensor4 {
    let ai = g.metric_inv;
    let dai = Sym2 {
        xx: dir[0] * g.d_metric_inv[0].xx + dir[1] * g.d_metric_inv[1].xx,
        yy: dir[0] * g.d_metric_inv[0].yy + dir[1] * g.d_metric_inv[1].yy,
        xy: dir[0] * g.d_metric_inv[0].xy + dir[1] * g.d_metric_inv[1].xy,
    };
    let c1 = 2.0 * m.mu * m.lambda / (2.0 * m.mu + m.lambda);
    let mu = m.mu;
    Tensor4::from_fn(|a, b, gg, d| {
        mu * (dai.get(a, gg) * ai.get(b, d)
            + ai.get(a, gg) * dai.get(b, d)
            + dai.get(b, gg) * ai.get(a, d)
            + ai.get(b, gg) * dai.get(a, d))
            + c1 * (dai.get(a, b) * ai.get(gg, d) + ai.get(a, b) * dai.get(gg, d))
    })
}

/// Geometry bundle extended with the finite-difference derivative of
/// `b^γ_{α|β}`, needed by the covariant derivatives of the bending strain.
#[derive(Clone, Debug)]
pub struct GeomDeriv {
    pub g: GeometryEval,
    /// `∂_δ b^γ_{α|β}`, indexed `[δ][γ][α][β]` (Richardson FD).
    pub d_b_mix_cov: [[[[f64; 2]; 2]; 2]; 2],
}

impl GeomDeriv {
    pub fn new(chart: &Chart, x: [f64; 2]) -> Result<GeomDeriv> {
        let g = eval_geometry(chart, x)?;
        let h = fd_step(x);
        let mut d = [[[[0.0; 2]; 2]; 2]; 2];
        for dl in 0..2 {
            let f = |s: f64| -> Result<[[[f64; 2]; 2]; 2]> {
                let mut y = x;
                y[dl] += s;
                Ok(eval_geometry(chart, y)?.b_mix_cov)
            };
            let coarse = central8(&f(h)?, &f(-h)?, h);
            let fine = central8(&f(0.5 * h)?, &f(-0.5 * h)?, 0.5 * h);
            for gg in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        d[dl][gg][a][b] =
                            (4.0 * fine[gg][a][b] - coarse[gg][a][b]) / 3.0;
                    }
                }
            }
        }
        Ok(GeomDeriv { g, d_b_mix_cov: d })
    }
}

fn central8(
    hi: &[[[f64; 2]; 2]; 2],
    lo: &[[[f64; 2]; 2]; 2],
    h: f64,
) -> [[[f64; 2]; 2]; 2] {
    let mut out = [[[0.0; 2]; 2]; 2];
    for g in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                out[g][a][b] = (hi[g][a][b] - lo[g][a][b]) / (2.0 * h);
            }
        }
    }
    out
}

pub(crate) fn fd_step(x: [f64; 2]) -> f64 {
    1e-3 * (1.0 + x[0].abs().max(x[1].abs()))
}

/// `W^{2,∞}` seminorm of the Christoffel symbols and `W^{3,∞}` seminorm of
/// the curvature tensor, sampled on a barycentric lattice over the triangle.
///
/// The top derivatives are Richardson-extrapolated central differences of
/// the analytic `∂Γ` and `∂b` fields; failure of the two-step extrapolation
/// to agree raises `InsufficientSmoothness`.
pub fn geometry_seminorms(
    chart: &Chart,
    tri: &[[f64; 2]; 3],
    sample_order: usize,
) -> Result<(f64, f64)> {
    let n = sample_order.max(1);
    let mut gamma_sup: f64 = 0.0;
    let mut b_sup: f64 = 0.0;
    for i in 0..=n {
        for j in 0..=(n - i) {
            let l1 = i as f64 / n as f64;
            let l2 = j as f64 / n as f64;
            let l3 = 1.0 - l1 - l2;
            let x = [
                l1 * tri[0][0] + l2 * tri[1][0] + l3 * tri[2][0],
                l1 * tri[0][1] + l2 * tri[1][1] + l3 * tri[2][1],
            ];
            let (gs, bs) = seminorms_at(chart, x)?;
            gamma_sup = gamma_sup.max(gs);
            b_sup = b_sup.max(bs);
        }
    }
    Ok((gamma_sup, b_sup))
}

fn seminorms_at(chart: &Chart, x: [f64; 2]) -> Result<(f64, f64)> {
    let h = fd_step(x);
    // |Γ|_{2,∞}: first differences of the analytic ∂Γ field.
    let dgamma = |y: [f64; 2]| -> Result<Vec<f64>> {
        let g = eval_geometry(chart, y)?;
        let mut v = Vec::with_capacity(24);
        for dl in 0..2 {
            for gg in 0..2 {
                for s in 0..3 {
                    v.push(g.d_chr[dl][gg].slot(s));
                }
            }
        }
        Ok(v)
    };
    let g2 = max_abs_first_diff(&dgamma, x, h)?;
    // |b|_{3,∞}: second differences of the analytic ∂b field.
    let db = |y: [f64; 2]| -> Result<Vec<f64>> {
        let g = eval_geometry(chart, y)?;
        let mut v = Vec::with_capacity(6);
        for dl in 0..2 {
            for s in 0..3 {
                v.push(g.d_b[dl].slot(s));
            }
        }
        Ok(v)
    };
    let b3 = max_abs_second_diff(&db, x, h)?;
    Ok((g2, b3))
}

/// Max abs of Richardson-extrapolated first differences along both axes,
/// with a convergence check between the h and h/2 extrapolants.
fn max_abs_first_diff(
    f: &dyn Fn([f64; 2]) -> Result<Vec<f64>>,
    x: [f64; 2],
    h: f64,
) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for dl in 0..2 {
        let at = |s: f64| -> Result<Vec<f64>> {
            let mut y = x;
            y[dl] += s;
            f(y)
        };
        let rich = |h: f64| -> Result<Vec<f64>> {
            let (p1, m1) = (at(h)?, at(-h)?);
            let (p2, m2) = (at(0.5 * h)?, at(-0.5 * h)?);
            Ok((0..p1.len())
                .map(|k| {
                    let c = (p1[k] - m1[k]) / (2.0 * h);
                    let f2 = (p2[k] - m2[k]) / h;
                    (4.0 * f2 - c) / 3.0
                })
                .collect())
        };
        let a = rich(h)?;
        let b = rich(0.5 * h)?;
        for k in 0..a.len() {
            if (a[k] - b[k]).abs() > 1e-4 * (1.0 + a[k].abs().max(b[k].abs())) {
                return Err(Error::InsufficientSmoothness(format!(
                    "first difference at ({}, {}) oscillates: {} vs {}",
                    x[0], x[1], a[k], b[k]
                )));
            }
            sup = sup.max(b[k].abs());
        }
    }
    Ok(sup)
}

/// Max abs of Richardson-extrapolated second differences (pure and mixed).
fn max_abs_second_diff(
    f: &dyn Fn([f64; 2]) -> Result<Vec<f64>>,
    x: [f64; 2],
    h: f64,
) -> Result<f64> {
    let at = |s1: f64, s2: f64| -> Result<Vec<f64>> { f([x[0] + s1, x[1] + s2]) };
    let second = |h: f64| -> Result<Vec<Vec<f64>>> {
        let c = at(0.0, 0.0)?;
        let (px, mx) = (at(h, 0.0)?, at(-h, 0.0)?);
        let (py, my) = (at(0.0, h)?, at(0.0, -h)?);
        let (pp, pm, mp, mm) = (at(h, h)?, at(h, -h)?, at(-h, h)?, at(-h, -h)?);
        let n = c.len();
        let mut out = vec![vec![0.0; n]; 3];
        for k in 0..n {
            out[0][k] = (px[k] - 2.0 * c[k] + mx[k]) / (h * h);
            out[1][k] = (py[k] - 2.0 * c[k] + my[k]) / (h * h);
            out[2][k] = (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * h * h);
        }
        Ok(out)
    };
    let rich = |h: f64| -> Result<Vec<Vec<f64>>> {
        let c = second(h)?;
        let f2 = second(0.5 * h)?;
        Ok((0..3)
            .map(|i| {
                (0..c[i].len())
                    .map(|k| (4.0 * f2[i][k] - c[i][k]) / 3.0)
                    .collect()
            })
            .collect())
    };
    let a = rich(h)?;
    let b = rich(0.5 * h)?;
    let mut sup: f64 = 0.0;
    for i in 0..3 {
        for k in 0..a[i].len() {
            if (a[i][k] - b[i][k]).abs() > 1e-3 * (1.0 + a[i][k].abs().max(b[i][k].abs())) {
                return Err(Error::InsufficientSmoothness(format!(
                    "second difference at ({}, {}) oscillates: {} vs {}",
                    x[0], x[1], a[i][k], b[i][k]
                )));
            }
            sup = sup.max(b[i][k].abs());
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    #[test]
    fn plane_is_flat_identity() {
        let g = eval_geometry(&Chart::Plane, [0.37, -0.2]).unwrap();
        assert_relative_eq!(g.metric.xx, 1.0);
        assert_relative_eq!(g.metric.yy, 1.0);
        assert_relative_eq!(g.metric.xy, 0.0);
        assert_relative_eq!(g.sqrt_a, 1.0);
        assert_eq!(g.b, Sym2::ZERO);
        assert_eq!(g.chr[0], Sym2::ZERO);
        assert_eq!(g.chr[1], Sym2::ZERO);
        assert_eq!(g.c3, Sym2::ZERO);
    }

    #[test]
    fn cylinder_curvature() {
        let g = eval_geometry(&Chart::Cylinder { radius: 1.0 }, [0.0, 0.0]).unwrap();
        assert_relative_eq!(g.metric.xx, 1.0, epsilon = 1e-14);
        assert_relative_eq!(g.metric.yy, 1.0, epsilon = 1e-14);
        assert_relative_eq!(g.metric.xy, 0.0, epsilon = 1e-14);
        assert_relative_eq!(g.b.xx, -1.0, epsilon = 1e-14);
        assert_relative_eq!(g.b.xy, 0.0, epsilon = 1e-14);
        assert_relative_eq!(g.b.yy, 0.0, epsilon = 1e-14);
        assert_eq!(g.chr[0], Sym2::ZERO);
        assert_eq!(g.chr[1], Sym2::ZERO);
        // c_11 = b^γ_1 b_γ1 = 1
        assert_relative_eq!(g.c3.xx, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn hypar_at_origin() {
        let g = eval_geometry(&Chart::Hypar { slope: 1.0 }, [0.0, 0.0]).unwrap();
        assert_relative_eq!(g.metric.xx, 1.0);
        assert_relative_eq!(g.b.xy, 1.0, epsilon = 1e-14);
        assert_relative_eq!(g.b.xx, 0.0, epsilon = 1e-14);
        assert_relative_eq!(g.b.yy, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn metric_inverse_identity() {
        let charts = [
            Chart::Cylinder { radius: 1.7 },
            Chart::Hypar { slope: 0.8 },
            Chart::Sphere { radius: 2.0, lat0: 0.9 },
        ];
        for chart in &charts {
            let g = eval_geometry(chart, [0.3, 0.45]).unwrap();
            for a in 0..2 {
                for b in 0..2 {
                    let s: f64 = (0..2).map(|c| g.metric_inv.get(a, c) * g.metric.get(c, b)).sum();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert_relative_eq!(s, expect, epsilon = 1e-12);
                }
            }
            // c_αβ = b^γ_α b_γβ recomputed
            let c = Sym2::from_fn(|a, b| {
                (0..2).map(|gg| g.b_mix[gg][a] * g.b.get(gg, b)).sum()
            });
            assert_relative_eq!(c.xx, g.c3.xx, epsilon = 1e-12);
            assert_relative_eq!(c.yy, g.c3.yy, epsilon = 1e-12);
            assert_relative_eq!(c.xy, g.c3.xy, epsilon = 1e-12);
        }
    }

    /// b^γ_{α|β} recomputed independently: FD of the mixed curvature plus
    /// Christoffel terms.
    #[test]
    fn curvature_covariant_derivative_matches_fd() {
        let chart = Chart::Sphere { radius: 2.0, lat0: 0.9 };
        let x = [0.3, 0.4];
        let g = eval_geometry(&chart, x).unwrap();
        let h = 1e-5;
        for beta in 0..2 {
            let mut xp = x;
            xp[beta] += h;
            let mut xm = x;
            xm[beta] -= h;
            let gp = eval_geometry(&chart, xp).unwrap();
            let gm = eval_geometry(&chart, xm).unwrap();
            for gg in 0..2 {
                for a in 0..2 {
                    let fd = (gp.b_mix[gg][a] - gm.b_mix[gg][a]) / (2.0 * h);
                    let mut expect = fd;
                    for l in 0..2 {
                        expect += g.chr[gg].get(l, beta) * g.b_mix[l][a];
                        expect -= g.chr[l].get(a, beta) * g.b_mix[gg][l];
                    }
                    assert_relative_eq!(g.b_mix_cov[gg][a][beta], expect, epsilon = 1e-8);
                }
            }
        }
    }

    /// ∂_γ a^{αβ} = -Γ^α_{γλ} a^{λβ} - Γ^β_{γλ} a^{αλ} (consequence of
    /// a^{αβ}|_γ = 0), checked against the assembled d_metric_inv and FD.
    #[test]
    fn inverse_metric_derivative_identity() {
        let chart = Chart::Sphere { radius: 2.0, lat0: 0.9 };
        let x = [0.25, 0.55];
        let g = eval_geometry(&chart, x).unwrap();
        for dl in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    let mut expect = 0.0;
                    for l in 0..2 {
                        expect -= g.chr[a].get(dl, l) * g.metric_inv.get(l, b);
                        expect -= g.chr[b].get(dl, l) * g.metric_inv.get(a, l);
                    }
                    assert_relative_eq!(
                        g.d_metric_inv[dl].get(a, b),
                        expect,
                        epsilon = 1e-11
                    );
                }
            }
            // FD cross-check
            let h = 1e-5;
            let mut xp = x;
            xp[dl] += h;
            let mut xm = x;
            xm[dl] -= h;
            let gp = eval_geometry(&chart, xp).unwrap();
            let gm = eval_geometry(&chart, xm).unwrap();
            for s in 0..3 {
                let fd = (gp.metric_inv.slot(s) - gm.metric_inv.slot(s)) / (2.0 * h);
                assert_relative_eq!(g.d_metric_inv[dl].slot(s), fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn geometry_derivative_fields_match_fd() {
        let chart = Chart::Hypar { slope: 1.3 };
        let x = [0.4, -0.3];
        let g = eval_geometry(&chart, x).unwrap();
        let h = 1e-5;
        for dl in 0..2 {
            let mut xp = x;
            xp[dl] += h;
            let mut xm = x;
            xm[dl] -= h;
            let gp = eval_geometry(&chart, xp).unwrap();
            let gm = eval_geometry(&chart, xm).unwrap();
            assert_relative_eq!(
                g.d_sqrt_a[dl],
                (gp.sqrt_a - gm.sqrt_a) / (2.0 * h),
                epsilon = 1e-9
            );
            for s in 0..3 {
                assert_relative_eq!(
                    g.d_b[dl].slot(s),
                    (gp.b.slot(s) - gm.b.slot(s)) / (2.0 * h),
                    epsilon = 1e-8
                );
                assert_relative_eq!(
                    g.d_c3[dl].slot(s),
                    (gp.c3.slot(s) - gm.c3.slot(s)) / (2.0 * h),
                    epsilon = 1e-8
                );
                for gg in 0..2 {
                    assert_relative_eq!(
                        g.d_chr[dl][gg].slot(s),
                        (gp.chr[gg].slot(s) - gm.chr[gg].slot(s)) / (2.0 * h),
                        epsilon = 1e-8
                    );
                }
            }
        }
    }

    #[test]
    fn elastic_tensor_identity_metric() {
        let g = eval_geometry(&Chart::Plane, [0.0, 0.0]).unwrap();
        let m = ElasticModuli::new(1.0, 1.0);
        let e = elastic_tensor(&g, &m);
        assert_relative_eq!(e.c[0][0][0][0], 8.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(e.c[0][0][1][1], 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(e.c[0][1][0][1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn elastic_lambda_zero_collapses() {
        let g = eval_geometry(&Chart::Plane, [0.0, 0.0]).unwrap();
        let m = ElasticModuli::new(1.3, 0.0);
        let e = elastic_tensor(&g, &m);
        for a in 0..2 {
            for b in 0..2 {
                for gg in 0..2 {
                    for d in 0..2 {
                        let kron = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
                        let expect = m.mu * (kron(a, gg) * kron(b, d) + kron(b, gg) * kron(a, d));
                        assert_relative_eq!(e.c[a][b][gg][d], expect, epsilon = 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn compliance_identity_metric_value() {
        let g = eval_geometry(&Chart::Plane, [0.0, 0.0]).unwrap();
        let m = ElasticModuli::new(1.0, 1.0);
        let c = compliance_tensor(&g, &m);
        // λ/(2μ+3λ) = 1/5, a_1111 = (1/2)(1 - 1/5) = 2/5
        assert_relative_eq!(c.c[0][0][0][0], 0.4, epsilon = 1e-14);
    }

    #[test]
    fn elastic_compliance_inverse_pair() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let charts = [
            Chart::Plane,
            Chart::Cylinder { radius: 1.4 },
            Chart::Sphere { radius: 2.0, lat0: 1.0 },
            Chart::Hypar { slope: 0.7 },
        ];
        for chart in &charts {
            let g = eval_geometry(chart, [0.3, 0.2]).unwrap();
            let m = ElasticModuli::new(1.0 + rng.gen::<f64>(), rng.gen::<f64>());
            let e = elastic_tensor(&g, &m);
            let c = compliance_tensor(&g, &m);
            for _ in 0..20 {
                let gam = Sym2::new(
                    rng.gen::<f64>() - 0.5,
                    rng.gen::<f64>() - 0.5,
                    rng.gen::<f64>() - 0.5,
                );
                let sig = e.apply(&gam);
                let back = c.apply(&sig);
                assert_relative_eq!(back.xx, gam.xx, epsilon = 1e-12, max_relative = 1e-12);
                assert_relative_eq!(back.yy, gam.yy, epsilon = 1e-12, max_relative = 1e-12);
                assert_relative_eq!(back.xy, gam.xy, epsilon = 1e-12, max_relative = 1e-12);
            }
            // zero roundtrip
            assert_eq!(c.apply(&e.apply(&Sym2::ZERO)), Sym2::ZERO);
            // positive definiteness of both packed forms
            for t4 in [&e, &c] {
                let eig = t4.mandel().symmetric_eigen().eigenvalues;
                assert!(eig.min() > 0.0, "tensor not PD on {:?}", chart);
            }
        }
    }

    #[test]
    fn elastic_tensor_full_symmetry_and_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = eval_geometry(&Chart::Sphere { radius: 2.0, lat0: 0.8 }, [0.4, 0.6]).unwrap();
        let m = ElasticModuli::new(1.0, 2.0);
        let e = elastic_tensor(&g, &m);
        for a in 0..2 {
            for b in 0..2 {
                for gg in 0..2 {
                    for d in 0..2 {
                        assert_relative_eq!(e.c[a][b][gg][d], e.c[b][a][gg][d]);
                        assert_relative_eq!(e.c[a][b][gg][d], e.c[gg][d][a][b]);
                    }
                }
            }
        }
        // continuity and coercivity constants from the packed eigenvalues
        let eig = e.mandel().symmetric_eigen().eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        assert!(lo > 0.0);
        for _ in 0..50 {
            let x = Sym2::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            let y = Sym2::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            let exy = e.energy(&x, &y);
            assert!(exy.abs() <= 1.001 * hi * x.frob2().sqrt() * y.frob2().sqrt());
            assert!(x.frob2() <= 1.001 / lo * e.energy(&x, &x));
        }
    }

    #[test]
    fn elastic_tensor_deriv_matches_fd() {
        let chart = Chart::Sphere { radius: 2.0, lat0: 0.9 };
        let m = ElasticModuli::new(1.0, 1.0);
        let x = [0.3, 0.5];
        let h = 1e-5;
        for dl in 0..2 {
            let dir = if dl == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            let g = eval_geometry(&chart, x).unwrap();
            let de = elastic_tensor_deriv(&g, &m, dir);
            let mut xp = x;
            xp[dl] += h;
            let mut xm = x;
            xm[dl] -= h;
            let ep = elastic_tensor(&eval_geometry(&chart, xp).unwrap(), &m);
            let em = elastic_tensor(&eval_geometry(&chart, xm).unwrap(), &m);
            for a in 0..2 {
                for b in 0..2 {
                    for gg in 0..2 {
                        for d in 0..2 {
                            let fd = (ep.c[a][b][gg][d] - em.c[a][b][gg][d]) / (2.0 * h);
                            assert_relative_eq!(de.c[a][b][gg][d], fd, epsilon = 1e-8);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_chart_detected() {
        let bad = Chart::Custom(Arc::new(crate::chart::CallableChart {
            map: Box::new(|x| [x[0], 0.0, 0.0]),
            d1: Box::new(|_, a| if a == 0 { [1.0, 0.0, 0.0] } else { [2.0, 0.0, 0.0] }),
            d2: Box::new(|_, _, _| [0.0; 3]),
            d3: Box::new(|_, _, _, _| [0.0; 3]),
        }));
        assert!(matches!(
            eval_geometry(&bad, [0.0, 0.0]),
            Err(Error::DegenerateChart(..))
        ));
    }

    #[test]
    fn seminorms_vanish_on_plane_and_cylinder() {
        let tri = [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]];
        let (g2, b3) = geometry_seminorms(&Chart::Plane, &tri, 3).unwrap();
        assert!(g2.abs() < 1e-9 && b3.abs() < 1e-9, "plane: {g2} {b3}");
        let (g2, b3) =
            geometry_seminorms(&Chart::Cylinder { radius: 1.0 }, &tri, 3).unwrap();
        assert!(g2.abs() < 1e-6 && b3.abs() < 1e-6, "cylinder: {g2} {b3}");
    }

    #[test]
    fn seminorms_cubic_graph_chart() {
        // φ = (x1, x2, x1^3 x2): Γ and b have nonvanishing higher derivatives.
        let chart = Chart::Custom(Arc::new(crate::chart::CallableChart {
            map: Box::new(|x| [x[0], x[1], x[0].powi(3) * x[1]]),
            d1: Box::new(|x, a| {
                if a == 0 {
                    [1.0, 0.0, 3.0 * x[0] * x[0] * x[1]]
                } else {
                    [0.0, 1.0, x[0].powi(3)]
                }
            }),
            d2: Box::new(|x, a, b| match (a, b) {
                (0, 0) => [0.0, 0.0, 6.0 * x[0] * x[1]],
                (1, 1) => [0.0, 0.0, 0.0],
                _ => [0.0, 0.0, 3.0 * x[0] * x[0]],
            }),
            d3: Box::new(|x, a, b, c| match a + b + c {
                0 => [0.0, 0.0, 6.0 * x[1]],
                1 => [0.0, 0.0, 6.0 * x[0]],
                _ => [0.0, 0.0, 0.0],
            }),
        }));
        let tri = [[0.2, 0.2], [0.7, 0.3], [0.4, 0.8]];
        let (g2, b3) = geometry_seminorms(&chart, &tri, 4).unwrap();
        assert!(g2 > 0.0 && b3 > 0.0);
        // dense-lattice brute force within 5%
        let (g2d, b3d) = geometry_seminorms(&chart, &tri, 12).unwrap();
        assert!((g2 - g2d).abs() <= 0.05 * g2d.abs() + 1e-12, "{g2} vs {g2d}");
        assert!((b3 - b3d).abs() <= 0.05 * b3d.abs() + 1e-12, "{b3} vs {b3d}");
    }

    #[test]
    fn seminorms_flag_nonsmooth_chart() {
        // z = |x1|^{2.5} has an unbounded third derivative across x1 = 0.
        let chart = Chart::Custom(Arc::new(crate::chart::CallableChart {
            map: Box::new(|x| [x[0], x[1], x[0].abs().powf(2.5)]),
            d1: Box::new(|x, a| {
                if a == 0 {
                    [1.0, 0.0, 2.5 * x[0].abs().powf(1.5) * x[0].signum()]
                } else {
                    [0.0, 1.0, 0.0]
                }
            }),
            d2: Box::new(|x, a, b| {
                if a == 0 && b == 0 {
                    [0.0, 0.0, 3.75 * x[0].abs().powf(0.5)]
                } else {
                    [0.0; 3]
                }
            }),
            d3: Box::new(|x, a, b, c| {
                if a == 0 && b == 0 && c == 0 {
                    [0.0, 0.0, 1.875 * x[0].signum() / x[0].abs().powf(0.5).max(1e-30)]
                } else {
                    [0.0; 3]
                }
            }),
        }));
        let tri = [[-0.1, 0.0], [0.2, 0.0], [0.0, 0.3]];
        assert!(geometry_seminorms(&chart, &tri, 4).is_err());
    }

    #[test]
    fn geom_deriv_fd_matches_on_cylinder() {
        // On the cylinder b^γ_{α|β} is identically zero, so its derivative is too.
        let gd = GeomDeriv::new(&Chart::Cylinder { radius: 1.0 }, [0.3, 0.2]).unwrap();
        for dl in 0..2 {
            for g in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        assert!(gd.d_b_mix_cov[dl][g][a][b].abs() < 1e-10);
                    }
                }
            }
        }
    }
}
