//! Small fixed-size tensor helpers for surface quantities.
//!
//! Symmetric 2x2 tensors are stored packed as (11, 22, 12). Fourth-order
//! tensors keep all 16 components; the packed 3x3 views used for
//! positive-definiteness checks apply engineering doubling on the shear slot.

use nalgebra::Matrix3;
use std::ops::{Add, Mul, Sub};

/// Packed symmetric 2x2 tensor.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

/// Multiplicity of each packed slot in a full index sum.
pub const SLOT_MULT: [f64; 3] = [1.0, 1.0, 2.0];

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { xx: 0.0, yy: 0.0, xy: 0.0 };

    pub fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Sym2 { xx, yy, xy }
    }

    /// Builds from an unpacked function of the two indices, symmetrizing the
    /// off-diagonal entry.
    pub fn from_fn(f: impl Fn(usize, usize) -> f64) -> Self {
        Sym2 { xx: f(0, 0), yy: f(1, 1), xy: 0.5 * (f(0, 1) + f(1, 0)) }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        match (a, b) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            _ => self.xy,
        }
    }

    #[inline]
    pub fn slot(&self, i: usize) -> f64 {
        match i {
            0 => self.xx,
            1 => self.yy,
            _ => self.xy,
        }
    }

    pub fn slot_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.xx,
            1 => &mut self.yy,
            _ => &mut self.xy,
        }
    }

    /// Unit tensor for a packed slot: slot 2 has both off-diagonal entries 1.
    pub fn unit(slot: usize) -> Self {
        let mut s = Sym2::ZERO;
        *s.slot_mut(slot) = 1.0;
        s
    }

    /// Frobenius square `Σ_{αβ} t_{αβ}^2` (off-diagonal counted twice).
    pub fn frob2(&self) -> f64 {
        self.xx * self.xx + self.yy * self.yy + 2.0 * self.xy * self.xy
    }

    /// Full contraction `Σ_{αβ} s_{αβ} t_{αβ}`.
    pub fn dot(&self, o: &Sym2) -> f64 {
        self.xx * o.xx + self.yy * o.yy + 2.0 * self.xy * o.xy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Inverse of a symmetric 2x2 (metric -> inverse metric).
    pub fn inverse(&self) -> Sym2 {
        let d = self.det();
        Sym2 { xx: self.yy / d, yy: self.xx / d, xy: -self.xy / d }
    }

    /// Applies the tensor to a vector: `(t v)_α = t_{αβ} v^β`.
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    /// Quadratic form `t_{αβ} x^α y^β`.
    pub fn quad(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        self.xx * x[0] * y[0] + self.yy * x[1] * y[1] + self.xy * (x[0] * y[1] + x[1] * y[0])
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2 { xx: self.xx + o.xx, yy: self.yy + o.yy, xy: self.xy + o.xy }
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2 { xx: self.xx - o.xx, yy: self.yy - o.yy, xy: self.xy - o.xy }
    }
}

impl Mul<f64> for Sym2 {
    type Output = Sym2;
    fn mul(self, s: f64) -> Sym2 {
        Sym2 { xx: self.xx * s, yy: self.yy * s, xy: self.xy * s }
    }
}

/// Packed slot -> index pair.
pub const SLOT_IDX: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];

/// Fourth-order tensor on symmetric 2x2 tensors, all 16 components stored.
///
/// Used for both the elastic tensor `a^{αβγδ}` and the compliance tensor
/// `a_{αβγδ}`; index placement is tracked by the caller.
#[derive(Clone, Copy, Debug)]
pub struct Tensor4 {
    pub c: [[[[f64; 2]; 2]; 2]; 2],
}

impl Tensor4 {
    pub fn from_fn(f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut c = [[[[0.0; 2]; 2]; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for g in 0..2 {
                    for d in 0..2 {
                        c[a][b][g][d] = f(a, b, g, d);
                    }
                }
            }
        }
        Tensor4 { c }
    }

    /// Applies the tensor to a symmetric argument over its trailing pair:
    /// `out^{αβ} = c^{αβγδ} t_{γδ}`.
    pub fn apply(&self, t: &Sym2) -> Sym2 {
        Sym2::from_fn(|a, b| {
            let mut s = 0.0;
            for g in 0..2 {
                for d in 0..2 {
                    s += self.c[a][b][g][d] * t.get(g, d);
                }
            }
            s
        })
    }

    /// Full double contraction `c^{αβγδ} s_{γδ} t_{αβ}`.
    pub fn energy(&self, s: &Sym2, t: &Sym2) -> f64 {
        self.apply(s).dot(t)
    }

    /// Packed 3x3 matrix in the Mandel convention (`sqrt(2)` on the shear
    /// slot on both sides), whose eigenvalues are the operator eigenvalues
    /// of the tensor on symmetric 2x2 arguments with the Frobenius metric.
    pub fn mandel(&self) -> Matrix3<f64> {
        let sq = std::f64::consts::SQRT_2;
        let f = [1.0, 1.0, sq];
        Matrix3::from_fn(|i, j| {
            let (a, b) = SLOT_IDX[i];
            let (g, d) = SLOT_IDX[j];
            f[i] * f[j] * self.c[a][b][g][d]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_roundtrip() {
        let m = Sym2::new(2.0, 3.0, 0.5);
        let mi = m.inverse();
        // m^{αγ} mi_{γβ} = δ^α_β
        for a in 0..2 {
            for b in 0..2 {
                let mut s = 0.0;
                for g in 0..2 {
                    s += m.get(a, g) * mi.get(g, b);
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                assert_relative_eq!(s, expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn frob_counts_shear_twice() {
        let t = Sym2::new(1.0, 2.0, 3.0);
        assert_relative_eq!(t.frob2(), 1.0 + 4.0 + 2.0 * 9.0);
    }
}
