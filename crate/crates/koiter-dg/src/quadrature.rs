//! Quadrature rules on triangles (collapsed-coordinate Gauss product) and on
//! edges (Gauss-Legendre), exact for polynomials up to the requested degree.

use crate::{Error, Result};

/// Highest supported exactness degree.
pub const MAX_DEGREE: usize = 12;

/// Triangle rule in barycentric coordinates; weights sum to 1, so
/// `∫_τ f ≈ area(τ) · Σ w_i f(λ_i)`.
#[derive(Clone, Debug)]
pub struct TriRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Edge rule on the parameter interval [0, 1]; weights sum to 1, so
/// `∫_e f ≈ len(e) · Σ w_i f(t_i)`.
#[derive(Clone, Debug)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Gauss-Legendre nodes and weights on [-1, 1], weights summing to 2.
/// Nodes are found by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_deriv(n, x);
        xs[n - 1 - i] = x;
        ws[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Triangle rule of the given polynomial exactness degree.
///
/// Built as a Gauss product on the collapsed square `ξ = s, η = t(1-s)`; the
/// Jacobian `(1-s)` raises the ξ-degree by one, hence `2n-1 >= degree+1`
/// points per direction.
pub fn tri_rule(degree: usize) -> Result<TriRule> {
    if degree > MAX_DEGREE {
        return Err(Error::UnsupportedDegree(degree, MAX_DEGREE));
    }
    let n = (degree + 3) / 2; // smallest n with 2n-1 >= degree+1
    let (xs, ws) = gauss_legendre(n);
    let to01 = |x: f64| 0.5 * (x + 1.0);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let s = to01(xs[i]);
        let wi = 0.5 * ws[i];
        for j in 0..n {
            let t = to01(xs[j]);
            let wj = 0.5 * ws[j];
            let xi = s;
            let eta = t * (1.0 - s);
            points.push([1.0 - xi - eta, xi, eta]);
            // raw weight integrates over the reference triangle (area 1/2);
            // normalize so the weights sum to one
            weights.push(2.0 * wi * wj * (1.0 - s));
        }
    }
    Ok(TriRule { points, weights, degree })
}

/// Edge (1D) rule of the given polynomial exactness degree on [0, 1].
pub fn edge_rule(degree: usize) -> Result<EdgeRule> {
    if degree > MAX_DEGREE + 2 {
        return Err(Error::UnsupportedDegree(degree, MAX_DEGREE + 2));
    }
    let n = degree / 2 + 1; // 2n-1 >= degree
    let (xs, ws) = gauss_legendre(n);
    let points = xs.iter().map(|x| 0.5 * (x + 1.0)).collect();
    let weights = ws.iter().map(|w| 0.5 * w).collect();
    Ok(EdgeRule { points, weights, degree })
}

/// Exact integral of a barycentric monomial over a triangle of unit area:
/// `∫ λ1^a λ2^b λ3^c dA = a! b! c! / (a+b+c+2)! * 2`.
pub fn barycentric_monomial_integral(a: usize, b: usize, c: usize) -> f64 {
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    2.0 * fact(a) * fact(b) * fact(c) / fact(a + b + c + 2)
}
