//! Cubic B-spline smoothing kernel in two dimensions.
//!
//! ```text
//! W(r, h) = σ (1 − 1.5 q² + 0.75 q³)   0 ≤ q < 1
//!         = σ 0.25 (2 − q)³            1 ≤ q < 2
//!         = 0                          q ≥ 2
//! ```
//! with `q = r / h` and `σ = 10 / (7 π h²)`. Support radius is `2h`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicSpline {
    h: f64,
    norm: f64,
}

impl CubicSpline {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "smoothing length must be positive, got {h}"
            )));
        }
        Ok(Self {
            h,
            norm: 10.0 / (7.0 * PI * h * h),
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn normalization(&self) -> f64 {
        self.norm
    }

    pub fn support_radius(&self) -> f64 {
        2.0 * self.h
    }

    pub fn evaluate(&self, r: f64) -> f64 {
        let q = r / self.h;
        if q < 1.0 {
            self.norm * (1.0 - 1.5 * q * q + 0.75 * q * q * q)
        } else if q < 2.0 {
            let t = 2.0 - q;
            self.norm * 0.25 * t * t * t
        } else {
            0.0
        }
    }

    /// Radial derivative dW/dr.
    pub fn dw_dr(&self, r: f64) -> f64 {
        let q = r / self.h;
        let dw_dq = if q < 1.0 {
            -3.0 * q + 2.25 * q * q
        } else if q < 2.0 {
            let t = 2.0 - q;
            -0.75 * t * t
        } else {
            0.0
        };
        self.norm * dw_dq / self.h
    }

    /// Gradient with respect to `x_i` of `W(x_i − x_j)`, given `dx = x_i − x_j`.
    ///
    /// Antisymmetric in `dx` bit for bit: the radius is computed from the
    /// squared components, so negating `dx` only flips the signs.
    pub fn gradient(&self, dx: Vec2) -> Vec2 {
        let r = dx.norm();
        if r == 0.0 {
            return Vec2::zeros();
        }
        let scale = self.dw_dr(r) / r;
        Vec2::new(scale * dx.x, scale * dx.y)
    }
}

pub fn evaluate(r: f64, h: f64) -> Result<f64> {
    Ok(CubicSpline::new(h)?.evaluate(r))
}

pub fn gradient(dx: Vec2, h: f64) -> Result<Vec2> {
    Ok(CubicSpline::new(h)?.gradient(dx))
}
