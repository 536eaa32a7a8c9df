use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Planar projective transform in pixel units, mapping source coordinates to
/// destination coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[[f64; 3]; 3]", from = "[[f64; 3]; 3]")]
pub struct Transform2D(Matrix3<f64>);

const SINGULAR_DET: f64 = 1e-12;

impl Transform2D {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Self(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0))
    }

    /// Counter-clockwise rotation in image coordinates (y down, so visually
    /// clockwise) by `angle` radians about `(cx, cy)`.
    pub fn rotation_about(angle: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let rot = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Self(Self::translation(cx, cy).0 * rot * Self::translation(-cx, -cy).0)
    }

    pub fn scale_about(scale: f64, cx: f64, cy: f64) -> Self {
        let m = Matrix3::new(scale, 0.0, 0.0, 0.0, scale, 0.0, 0.0, 0.0, 1.0);
        Self(Self::translation(cx, cy).0 * m * Self::translation(-cx, -cy).0)
    }

    /// Axis-aligned scale followed by translation: `p -> (sx*x + tx, sy*y + ty)`.
    pub fn scale_translate(sx: f64, sy: f64, tx: f64, ty: f64) -> Self {
        Self(Matrix3::new(sx, 0.0, tx, 0.0, sy, ty, 0.0, 0.0, 1.0))
    }

    /// Homography taking the four `src` points onto the four `dst` points.
    pub fn from_correspondences(src: &[[f64; 2]; 4], dst: &[[f64; 2]; 4]) -> Result<Self> {
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for (k, (s, d)) in src.iter().zip(dst).enumerate() {
            let (x, y, u, v) = (s[0], s[1], d[0], d[1]);
            let r = 2 * k;
            a.row_mut(r)
                .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
            a.row_mut(r + 1)
                .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
            b[r] = u;
            b[r + 1] = v;
        }
        let h = a.lu().solve(&b).ok_or(Error::SingularTransform(0.0))?;
        let t = Self(Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0));
        t.check_invertible()?;
        Ok(t)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Transform2D) -> Transform2D {
        Transform2D(next.0 * self.0)
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Determinant of the upper-left 2x2 block (area scale of the linear part).
    pub fn linear_determinant(&self) -> f64 {
        self.0[(0, 0)] * self.0[(1, 1)] - self.0[(0, 1)] * self.0[(1, 0)]
    }

    /// Rotation angle of the linear part, radians.
    pub fn rotation_angle(&self) -> f64 {
        self.0[(1, 0)].atan2(self.0[(0, 0)])
    }

    pub fn is_affine(&self) -> bool {
        self.0[(2, 0)] == 0.0 && self.0[(2, 1)] == 0.0 && self.0[(2, 2)] == 1.0
    }

    pub fn check_invertible(&self) -> Result<()> {
        let det = self.determinant();
        if !det.is_finite() || det.abs() <= SINGULAR_DET {
            return Err(Error::SingularTransform(det));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<Transform2D> {
        self.check_invertible()?;
        let inv = self
            .0
            .try_inverse()
            .ok_or(Error::SingularTransform(self.determinant()))?;
        Ok(Transform2D(inv / inv[(2, 2)]))
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.0 * Vector3::new(x, y, 1.0);
        (p.x / p.z, p.y / p.z)
    }

    pub fn apply_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (x, y) = self.apply(p[0], p[1]);
        [x, y]
    }

    /// Largest absolute entry difference, for approximate comparisons.
    pub fn max_abs_diff(&self, other: &Transform2D) -> f64 {
        (self.0 - other.0).abs().max()
    }
}

impl Default for Transform2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl From<Transform2D> for [[f64; 3]; 3] {
    fn from(t: Transform2D) -> Self {
        let m = t.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

impl From<[[f64; 3]; 3]> for Transform2D {
    fn from(rows: [[f64; 3]; 3]) -> Self {
        Transform2D::from_rows(rows)
    }
}
