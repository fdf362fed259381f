//! Point-cloud and rigid-pose primitives.

mod canonical;
mod nn;
mod quat;
mod sampling;

pub use canonical::{canonicalize, Canonical};
pub use nn::{chamfer_distance, chamfer_distance_brute, nearest_all, nearest_brute, Chamfer, NearestIndex};
pub use quat::Quat;
pub use sampling::{furthest_point_sample, furthest_point_sample_from};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = [f64; 3];

const UNIT_TOL: f64 = 1e-9;

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance. Every nearest-neighbour path in the crate
/// goes through this function so that argmin decisions agree bit-for-bit.
#[inline]
pub fn dist2(a: Vec3, b: Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// An ordered set of 3D points in shape units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec3>", into = "Vec<Vec3>")]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud must contain at least one point"));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        mean(&self.points)
    }

    /// Sub-cloud made of the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            let p = self
                .points
                .get(i)
                .ok_or_else(|| Error::invalid(format!("index {i} out of range for cloud of {}", self.len())))?;
            out.push(*p);
        }
        PointCloud::new(out)
    }

    /// Axis-aligned extents (max - min) per coordinate.
    pub fn extents(&self) -> Vec3 {
        let (lo, hi) = self.bounds();
        sub(hi, lo)
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Radius of the largest centroid-centred ball inside the axis-aligned
    /// bounding box: the smallest distance from the centroid to a box face.
    pub fn inner_radius(&self) -> f64 {
        let c = self.centroid();
        let (lo, hi) = self.bounds();
        (0..3)
            .map(|k| (hi[k] - c[k]).min(c[k] - lo[k]))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }
}

impl TryFrom<Vec<Vec3>> for PointCloud {
    type Error = Error;
    fn try_from(points: Vec<Vec3>) -> Result<Self> {
        PointCloud::new(points)
    }
}

impl From<PointCloud> for Vec<Vec3> {
    fn from(c: PointCloud) -> Self {
        c.points
    }
}

pub fn mean(points: &[Vec3]) -> Vec3 {
    let mut acc = [0.0; 3];
    for p in points {
        acc = add(acc, *p);
    }
    scale(acc, 1.0 / points.len().max(1) as f64)
}

/// Rigid 6-DoF pose: unit quaternion rotation followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(rename = "quat")]
    pub rotation: Quat,
    #[serde(rename = "trans")]
    pub translation: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: Quat::IDENTITY,
        translation: [0.0; 3],
    };

    /// Builds a pose, normalizing the quaternion and enforcing `w >= 0`.
    pub fn new(rotation: Quat, translation: Vec3) -> Result<Self> {
        let rotation = rotation.normalized()?.canonical();
        if translation.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPose("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rotation.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidPose(format!("quaternion norm {n} is not 1")));
        }
        if self.translation.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPose("non-finite translation".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        add(self.rotation.rotate(p), self.translation)
    }

    /// Maps every point `x` to `R x + t`.
    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud> {
        self.validate()?;
        Ok(PointCloud {
            points: self.apply_points(cloud.points()),
        })
    }

    pub(crate) fn apply_points(&self, points: &[Vec3]) -> Vec<Vec3> {
        let m = self.rotation.to_matrix();
        points
            .iter()
            .map(|p| add(mat_vec(&m, *p), self.translation))
            .collect()
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.conjugate();
        Pose {
            rotation: inv.canonical(),
            translation: scale(inv.rotate(self.translation), -1.0),
        }
    }

    /// Group composition `self ∘ other` (apply `other` first).
    pub fn then_after(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.mul(&other.rotation).renormalized().canonical(),
            translation: self.transform_point(other.translation),
        }
    }

    /// The 7 raw parameters `[w, x, y, z, tx, ty, tz]`.
    pub fn params(&self) -> [f64; 7] {
        let q = self.rotation;
        let t = self.translation;
        [q.w, q.x, q.y, q.z, t[0], t[1], t[2]]
    }

    /// Inverse of [`Pose::params`]; the quaternion is normalized.
    pub fn from_params(p: &[f64; 7]) -> Result<Pose> {
        Pose::new(Quat::new(p[0], p[1], p[2], p[3]), [p[4], p[5], p[6]])
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::IDENTITY
    }
}

/// Per-iteration pose update: a rotation difference and a translation
/// difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseDelta {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl PoseDelta {
    pub const IDENTITY: PoseDelta = PoseDelta {
        rotation: Quat::IDENTITY,
        translation: [0.0; 3],
    };

    pub fn new(rotation: Quat, translation: Vec3) -> Result<Self> {
        let rotation = rotation.normalized()?;
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// The delta that takes `from` to `to` under [`compose_pose`].
    pub fn between(from: &Pose, to: &Pose) -> PoseDelta {
        PoseDelta {
            rotation: to.rotation.mul(&from.rotation.conjugate()).renormalized(),
            translation: sub(to.translation, from.translation),
        }
    }
}

/// Component-wise pose update: the rotation is the quaternion product
/// `δR · R_prev` and the translation is `δt + t_prev`. This is not SE(3)
/// group composition; the translation is not rotated by `δR`.
pub fn compose_pose(delta: &PoseDelta, prev: &Pose) -> Result<Pose> {
    prev.validate()?;
    let n = delta.rotation.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidPose(format!("delta quaternion norm {n} is not 1")));
    }
    if *delta == PoseDelta::IDENTITY {
        return Ok(*prev);
    }
    Pose::new(
        delta.rotation.mul(&prev.rotation),
        add(delta.translation, prev.translation),
    )
}

pub fn apply_pose(pose: &Pose, cloud: &PointCloud) -> Result<PointCloud> {
    pose.apply(cloud)
}

pub type Mat3 = [[f64; 3]; 3];

#[inline]
pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}
