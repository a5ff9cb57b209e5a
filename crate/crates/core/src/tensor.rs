//! Small fixed-size tensor helpers for 2D continuum quantities.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;

/// Symmetric 2×2 tensor stored as (xx, yy, xy).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        xx: 0.0,
        yy: 0.0,
        xy: 0.0,
    };

    pub fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Self { xx, yy, xy }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Double contraction `a : b`.
    pub fn ddot(&self, other: &Sym2) -> f64 {
        self.xx * other.xx + self.yy * other.yy + 2.0 * self.xy * other.xy
    }

    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2::new(self.xx * s, self.yy * s, self.xy * s)
    }

    pub fn add(&self, other: &Sym2) -> Sym2 {
        Sym2::new(self.xx + other.xx, self.yy + other.yy, self.xy + other.xy)
    }

    /// Tensor-vector product.
    pub fn mul_vec(&self, v: &Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    /// Eigenvalues ordered as (max, min).
    pub fn principal(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let radius = half_diff.hypot(self.xy);
        (mean + radius, mean - radius)
    }

    /// Symmetric part of a general 2×2 matrix.
    pub fn sym_part(m: &Matrix2<f64>) -> Sym2 {
        Sym2::new(m[(0, 0)], m[(1, 1)], 0.5 * (m[(0, 1)] + m[(1, 0)]))
    }

    /// Jaumann co-rotational term `W·S − S·W` for a spin with off-diagonal
    /// component `w = W_xy = −W_yx`.
    pub fn jaumann(&self, w: f64) -> Sym2 {
        Sym2::new(2.0 * w * self.xy, -2.0 * w * self.xy, w * (self.yy - self.xx))
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.yy.is_finite() && self.xy.is_finite()
    }
}

/// Skew part of a velocity gradient as a single scalar `W_xy`.
pub fn spin(m: &Matrix2<f64>) -> f64 {
    0.5 * (m[(0, 1)] - m[(1, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn principal_of_known_tensor() {
        let s = Sym2::new(2.0, 0.0, 1.0);
        let (smax, smin) = s.principal();
        assert!((smax - (1.0 + 2f64.sqrt())).abs() < 1e-15);
        assert!((smin - (1.0 - 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn jaumann_matches_matrix_form() {
        let s = Sym2::new(3.0, -1.0, 0.7);
        let w = 0.3;
        let wm = Matrix2::new(0.0, w, -w, 0.0);
        let sm = Matrix2::new(s.xx, s.xy, s.xy, s.yy);
        let expected = wm * sm - sm * wm;
        let got = s.jaumann(w);
        assert!((got.xx - expected[(0, 0)]).abs() < 1e-14);
        assert!((got.yy - expected[(1, 1)]).abs() < 1e-14);
        assert!((got.xy - expected[(0, 1)]).abs() < 1e-14);
        assert!((expected[(0, 1)] - expected[(1, 0)]).abs() < 1e-14);
    }
}
