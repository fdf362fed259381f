use serde::{Deserialize, Serialize};

use super::{Mat3, Vec3};
use crate::{Error, Result};

/// Quaternion stored as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quat {
    fn from(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let n = super::norm(axis);
        if n == 0.0 {
            return Quat::IDENTITY;
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let k = s / n;
        Quat::new(c, axis[0] * k, axis[1] * k, axis[2] * k)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Result<Quat> {
        let n = self.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::InvalidPose(format!("cannot normalize quaternion of norm {n}")));
        }
        Ok(Quat::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    /// Normalization for quaternions already known to be near unit length.
    pub(crate) fn renormalized(&self) -> Quat {
        let n = self.norm();
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    /// `q` and `-q` are the same rotation; pick the one with `w >= 0`.
    pub fn canonical(&self) -> Quat {
        if self.w < 0.0 || (self.w == 0.0 && (self.x, self.y, self.z) < (0.0, 0.0, 0.0)) {
            Quat::new(-self.w, -self.x, -self.y, -self.z)
        } else {
            *self
        }
    }

    pub fn conjugate(&self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * other`.
    pub fn mul(&self, o: &Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn dot(&self, o: &Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.w.abs().min(1.0).acos()
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        super::mat_vec(&self.to_matrix(), v)
    }

    /// Rotation matrix of a unit quaternion.
    pub fn to_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Partial derivatives of [`Quat::to_matrix`] with respect to
    /// `w, x, y, z`, treating the matrix formula as a polynomial in the four
    /// components.
    pub fn matrix_derivatives(&self) -> [Mat3; 4] {
        let (w, x, y, z) = (2.0 * self.w, 2.0 * self.x, 2.0 * self.y, 2.0 * self.z);
        [
            [[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]],
            [[0.0, y, z], [y, -2.0 * x, -w], [z, w, -2.0 * x]],
            [[-2.0 * y, x, w], [x, 0.0, z], [-w, z, -2.0 * y]],
            [[-2.0 * z, -w, x], [w, -2.0 * z, y], [x, y, 0.0]],
        ]
    }

    pub fn from_matrix(m: &Mat3) -> Quat {
        let mat = nalgebra::Matrix3::from_fn(|r, c| m[r][c]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(mat);
        let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
        Quat::new(q.w, q.i, q.j, q.k).renormalized().canonical()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let q = Quat::from_axis_angle([0.3, -1.0, 0.2], 2.2).canonical();
        let back = Quat::from_matrix(&q.to_matrix());
        assert!((q.dot(&back).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let q = Quat::new(0.4, -0.3, 0.8, 0.1);
        let d = q.matrix_derivatives();
        let h = 1e-6;
        let comps = |q: &Quat| [q.w, q.x, q.y, q.z];
        for k in 0..4 {
            let mut p = comps(&q);
            let mut m = comps(&q);
            p[k] += h;
            m[k] -= h;
            let rp = Quat::from(p).to_matrix();
            let rm = Quat::from(m).to_matrix();
            for r in 0..3 {
                for c in 0..3 {
                    let fd = (rp[r][c] - rm[r][c]) / (2.0 * h);
                    assert!((fd - d[k][r][c]).abs() < 1e-8, "k={k} r={r} c={c}");
                }
            }
        }
    }

    #[test]
    fn canonical_sign() {
        let q = Quat::new(-0.5, 0.5, 0.5, 0.5).canonical();
        assert!(q.w > 0.0);
    }
}
