//! Analytic charts of the shell mid-surface: the parameterization
//! `φ: Ω ⊂ R² -> R³` with closed-form partial derivatives through order 3.

use std::sync::Arc;

type Vec3 = [f64; 3];

/// User-supplied chart with callable derivatives.
pub struct CallableChart {
    pub map: Box<dyn Fn([f64; 2]) -> Vec3 + Send + Sync>,
    /// `∂_a φ`
    pub d1: Box<dyn Fn([f64; 2], usize) -> Vec3 + Send + Sync>,
    /// `∂_a ∂_b φ`
    pub d2: Box<dyn Fn([f64; 2], usize, usize) -> Vec3 + Send + Sync>,
    /// `∂_a ∂_b ∂_c φ`
    pub d3: Box<dyn Fn([f64; 2], usize, usize, usize) -> Vec3 + Send + Sync>,
}

/// Chart of the mid-surface. Built-in charts carry exact derivatives; the
/// `Custom` variant wraps user callables (validated via [`Chart::fd_validate`]).
#[derive(Clone)]
pub enum Chart {
    /// `φ(x) = (x1, x2, 0)`
    Plane,
    /// `φ(x) = (R cos(x1/R), R sin(x1/R), x2)`
    Cylinder { radius: f64 },
    /// Hyperbolic paraboloid `φ(x) = (x1, x2, k x1 x2)`
    Hypar { slope: f64 },
    /// Sphere patch of radius R: colatitude `θ = lat0 + x2/R`, longitude
    /// `ψ = x1/R`.
    Sphere { radius: f64, lat0: f64 },
    Custom(Arc<CallableChart>),
}

impl std::fmt::Debug for Chart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Chart::Plane => write!(f, "Plane"),
            Chart::Cylinder { radius } => write!(f, "Cylinder {{ radius: {radius} }}"),
            Chart::Hypar { slope } => write!(f, "Hypar {{ slope: {slope} }}"),
            Chart::Sphere { radius, lat0 } => {
                write!(f, "Sphere {{ radius: {radius}, lat0: {lat0} }}")
            }
            Chart::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Chart {
    pub fn map(&self, x: [f64; 2]) -> Vec3 {
        match self {
            Chart::Plane => [x[0], x[1], 0.0],
            Chart::Cylinder { radius } => {
                let t = x[0] / radius;
                [radius * t.cos(), radius * t.sin(), x[1]]
            }
            Chart::Hypar { slope } => [x[0], x[1], slope * x[0] * x[1]],
            Chart::Sphere { radius, lat0 } => {
                let (s, c) = (lat0 + x[1] / radius).sin_cos();
                let (ss, cc) = (x[0] / radius).sin_cos();
                [radius * s * cc, radius * s * ss, radius * c]
            }
            Chart::Custom(cc) => (cc.map)(x),
        }
    }

    pub fn d1(&self, x: [f64; 2], a: usize) -> Vec3 {
        match self {
            Chart::Plane => {
                if a == 0 {
                    [1.0, 0.0, 0.0]
                } else {
                    [0.0, 1.0, 0.0]
                }
            }
            Chart::Cylinder { radius } => {
                let t = x[0] / radius;
                if a == 0 {
                    [-t.sin(), t.cos(), 0.0]
                } else {
                    [0.0, 0.0, 1.0]
                }
            }
            Chart::Hypar { slope } => {
                if a == 0 {
                    [1.0, 0.0, slope * x[1]]
                } else {
                    [0.0, 1.0, slope * x[0]]
                }
            }
            Chart::Sphere { .. } => self.sphere_deriv(x, &[a]),
            Chart::Custom(cc) => (cc.d1)(x, a),
        }
    }

    pub fn d2(&self, x: [f64; 2], a: usize, b: usize) -> Vec3 {
        match self {
            Chart::Plane => [0.0; 3],
            Chart::Cylinder { radius } => {
                if a == 0 && b == 0 {
                    let t = x[0] / radius;
                    [-t.cos() / radius, -t.sin() / radius, 0.0]
                } else {
                    [0.0; 3]
                }
            }
            Chart::Hypar { slope } => {
                if a != b {
                    [0.0, 0.0, *slope]
                } else {
                    [0.0; 3]
                }
            }
            Chart::Sphere { .. } => self.sphere_deriv(x, &[a, b]),
            Chart::Custom(cc) => (cc.d2)(x, a, b),
        }
    }

    pub fn d3(&self, x: [f64; 2], a: usize, b: usize, c: usize) -> Vec3 {
        match self {
            Chart::Plane | Chart::Hypar { .. } => [0.0; 3],
            Chart::Cylinder { radius } => {
                if a == 0 && b == 0 && c == 0 {
                    let t = x[0] / radius;
                    let r2 = radius * radius;
                    [t.sin() / r2, -t.cos() / r2, 0.0]
                } else {
                    [0.0; 3]
                }
            }
            Chart::Sphere { .. } => self.sphere_deriv(x, &[a, b, c]),
            Chart::Custom(cc) => (cc.d3)(x, a, b, c),
        }
    }

    /// Sphere-patch derivative for an arbitrary multi-index: each coordinate
    /// derivative contributes a factor 1/R and one angular derivative.
    fn sphere_deriv(&self, x: [f64; 2], idx: &[usize]) -> Vec3 {
        let Chart::Sphere { radius, lat0 } = self else { unreachable!() };
        let r = *radius;
        let npsi = idx.iter().filter(|&&i| i == 0).count();
        let ntheta = idx.len() - npsi;
        let theta = lat0 + x[1] / r;
        let psi = x[0] / r;
        // φ/R = (sinθ cosψ, sinθ sinψ, cosθ); θ-derivatives cycle with period
        // 4 via sin -> cos -> -sin -> -cos, ψ-derivatives likewise on (cosψ,
        // sinψ, const).
        let st = cyc(theta, ntheta);
        let ct = cyc(theta + std::f64::consts::FRAC_PI_2, ntheta);
        let cp = cyc(psi + std::f64::consts::FRAC_PI_2, npsi);
        let sp = cyc(psi, npsi);
        let scale = r / r.powi(idx.len() as i32);
        [scale * st * cp, scale * st * sp, if npsi == 0 { scale * ct } else { 0.0 }]
    }

    /// Maximum relative discrepancy between the supplied derivative callables
    /// and central finite differences of the next-lower order, at `x` with
    /// step `h`.
    pub fn fd_validate(&self, x: [f64; 2], h: f64) -> f64 {
        let mut worst: f64 = 0.0;
        let mut check = |analytic: Vec3, lo: Vec3, hi: Vec3| {
            for k in 0..3 {
                let fd = (hi[k] - lo[k]) / (2.0 * h);
                let d = (analytic[k] - fd).abs() / (1.0 + analytic[k].abs());
                worst = worst.max(d);
            }
        };
        let step = |x: [f64; 2], a: usize, s: f64| {
            let mut y = x;
            y[a] += s;
            y
        };
        for a in 0..2 {
            check(self.d1(x, a), self.map(step(x, a, -h)), self.map(step(x, a, h)));
            for b in 0..2 {
                check(self.d2(x, a, b), self.d1(step(x, b, -h), a), self.d1(step(x, b, h), a));
                for c in 0..2 {
                    check(
                        self.d3(x, a, b, c),
                        self.d2(step(x, c, -h), a, b),
                        self.d2(step(x, c, h), a, b),
                    );
                }
            }
        }
        worst
    }
}

/// sin(x + n π/2) evaluated without accumulating the shift.
fn cyc(x: f64, n: usize) -> f64 {
    match n % 4 {
        0 => x.sin(),
        1 => x.cos(),
        2 => -x.sin(),
        _ => -x.cos(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_fd_validate_tiny() {
        assert!(Chart::Plane.fd_validate([0.3, 0.4], 1e-4) <= 1e-8);
    }

    #[test]
    fn cylinder_fd_validate_truncation() {
        let c = Chart::Cylinder { radius: 1.0 };
        assert!(c.fd_validate([0.5, 0.25], 1e-4) <= 1e-7);
    }

    #[test]
    fn sphere_and_hypar_fd_validate() {
        let s = Chart::Sphere { radius: 2.0, lat0: 0.9 };
        assert!(s.fd_validate([0.3, 0.6], 1e-4) <= 1e-7);
        let hp = Chart::Hypar { slope: 1.5 };
        assert!(hp.fd_validate([0.3, 0.6], 1e-4) <= 1e-9);
    }

    #[test]
    fn faulty_derivative_is_flagged() {
        // deliberately wrong ∂_1 φ
        let bad = Chart::Custom(Arc::new(CallableChart {
            map: Box::new(|x| [x[0], x[1], 0.0]),
            d1: Box::new(|_, a| if a == 0 { [1.1, 0.0, 0.0] } else { [0.0, 1.0, 0.0] }),
            d2: Box::new(|_, _, _| [0.0; 3]),
            d3: Box::new(|_, _, _, _| [0.0; 3]),
        }));
        assert!(bad.fd_validate([0.5, 0.5], 1e-4) >= 1e-2);
    }
}
