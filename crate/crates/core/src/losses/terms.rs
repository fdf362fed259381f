//! Individual loss terms with gradients with respect to the seven pose
//! parameters of every part.

use super::Term;
use crate::dataset::Joint;
use crate::geom::{dist2, mat_vec, sub, Chamfer, Mat3, PointCloud, Pose, Vec3};
use crate::matching::JointPairing;
use crate::{Error, Result};

/// Value, pose gradient and the nearest-neighbour correspondences a term
/// depended on.
#[derive(Debug, Clone, PartialEq)]
pub struct TermValue {
    pub value: f64,
    /// `[dw, dx, dy, dz, dtx, dty, dtz]` per part; the quaternion part is
    /// projected onto the tangent space of the unit sphere.
    pub gradient: Vec<[f64; 7]>,
    /// Nearest-neighbour matches as (target index, target position); empty
    /// for terms without nearest neighbours.
    pub signature: Vec<(usize, Vec3)>,
}

/// Everything a term needs besides the poses being evaluated.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub parts: &'a [PointCloud],
    /// Ground-truth pose assigned to each part, after any congruent
    /// permutation.
    pub gt: Vec<Pose>,
    pub joints: &'a [Joint],
    pub pairing: &'a JointPairing,
    /// Parts covered by the flip term.
    pub flip_mask: Vec<bool>,
}

impl Problem<'_> {
    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    fn check(&self, poses: &[Pose]) -> Result<()> {
        let n = self.parts.len();
        if poses.len() != n || self.gt.len() != n || self.flip_mask.len() != n {
            return Err(Error::invalid(format!(
                "{} poses and {} ground-truth poses for {n} parts",
                poses.len(),
                self.gt.len()
            )));
        }
        for p in poses.iter().chain(&self.gt) {
            p.validate()?;
        }
        Ok(())
    }

    pub fn evaluate(&self, term: Term, poses: &[Pose]) -> Result<TermValue> {
        self.run(term, poses, true)
    }

    /// Like [`Problem::evaluate`] but skips the gradient, which comes back
    /// as zeros.
    pub fn value(&self, term: Term, poses: &[Pose]) -> Result<TermValue> {
        self.run(term, poses, false)
    }

    fn run(&self, term: Term, poses: &[Pose], with_gradient: bool) -> Result<TermValue> {
        self.check(poses)?;
        let mut acc = Accumulator::new(poses, with_gradient);
        let mut signature = Vec::new();
        let value = match term {
            Term::Translation => self.translation(poses, &mut acc),
            Term::Rotation => self.rotation(poses, &mut acc, &mut signature)?,
            Term::Assembly => self.assembly(poses, &mut acc, &mut signature)?,
            Term::Flip => self.flip(poses, &mut acc),
            Term::Coarse => self.coarse(poses, &mut acc)?,
            Term::Fine => self.fine(poses, &mut acc, &mut signature)?,
        };
        Ok(TermValue {
            value,
            gradient: acc.finish(poses),
            signature,
        })
    }

    fn translation(&self, poses: &[Pose], acc: &mut Accumulator) -> f64 {
        let mut value = 0.0;
        for (i, (p, g)) in poses.iter().zip(&self.gt).enumerate() {
            let d = sub(p.translation, g.translation);
            value += dist2(p.translation, g.translation);
            acc.add_translation(i, [2.0 * d[0], 2.0 * d[1], 2.0 * d[2]]);
        }
        value
    }

    fn rotation(&self, poses: &[Pose], acc: &mut Accumulator, sig: &mut Vec<(usize, Vec3)>) -> Result<f64> {
        let mut value = 0.0;
        for (i, part) in self.parts.iter().enumerate() {
            let a = rotate_all(&poses[i], part.points());
            let b = rotate_all(&self.gt[i], part.points());
            let c = Chamfer::compute(&a, &b)?;
            let (ga, _) = c.gradients(&a, &b);
            for (x, g) in part.points().iter().zip(&ga) {
                acc.add_rotation(i, *x, *g);
            }
            value += c.value;
            record(sig, &c, &a, &b);
        }
        Ok(value)
    }

    fn assembly(&self, poses: &[Pose], acc: &mut Accumulator, sig: &mut Vec<(usize, Vec3)>) -> Result<f64> {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, part) in self.parts.iter().enumerate() {
            a.extend(poses[i].apply_points(part.points()));
            b.extend(self.gt[i].apply_points(part.points()));
        }
        let c = Chamfer::compute(&a, &b)?;
        let (ga, _) = c.gradients(&a, &b);
        let mut offset = 0;
        for (i, part) in self.parts.iter().enumerate() {
            for (k, x) in part.points().iter().enumerate() {
                acc.add_point(i, *x, ga[offset + k]);
            }
            offset += part.len();
        }
        record(sig, &c, &a, &b);
        Ok(c.value)
    }

    fn flip(&self, poses: &[Pose], acc: &mut Accumulator) -> f64 {
        let mut value = 0.0;
        for (i, part) in self.parts.iter().enumerate() {
            if !self.flip_mask[i] {
                continue;
            }
            let y = poses[i].apply_points(part.points());
            let yg = self.gt[i].apply_points(part.points());
            for ((x, p), q) in part.points().iter().zip(&y).zip(&yg) {
                let d = sub(*p, *q);
                value += dist2(*p, *q);
                acc.add_point(i, *x, [2.0 * d[0], 2.0 * d[1], 2.0 * d[2]]);
            }
        }
        value
    }

    fn pair(&self, peg: usize, hole: usize) -> Result<(&Joint, &Joint)> {
        let get = |id: usize| {
            self.joints
                .get(id)
                .filter(|j| j.id == id && j.part_id < self.parts.len())
                .ok_or_else(|| Error::invalid(format!("pairing references unknown joint {id}")))
        };
        Ok((get(peg)?, get(hole)?))
    }

    fn coarse(&self, poses: &[Pose], acc: &mut Accumulator) -> Result<f64> {
        let mut value = 0.0;
        for &(p, h) in self.pairing.pairs() {
            let (jp, jh) = self.pair(p, h)?;
            let cp = poses[jp.part_id].transform_point(jp.centroid);
            let ch = poses[jh.part_id].transform_point(jh.centroid);
            let d = sub(cp, ch);
            value += dist2(cp, ch);
            acc.add_point(jp.part_id, jp.centroid, [2.0 * d[0], 2.0 * d[1], 2.0 * d[2]]);
            acc.add_point(jh.part_id, jh.centroid, [-2.0 * d[0], -2.0 * d[1], -2.0 * d[2]]);
        }
        Ok(value)
    }

    fn fine(&self, poses: &[Pose], acc: &mut Accumulator, sig: &mut Vec<(usize, Vec3)>) -> Result<f64> {
        let mut value = 0.0;
        for &(p, h) in self.pairing.pairs() {
            let (jp, jh) = self.pair(p, h)?;
            let xp = joint_points(self.parts, jp)?;
            let xh = joint_points(self.parts, jh)?;
            let a = poses[jp.part_id].apply_points(&xp);
            let b = poses[jh.part_id].apply_points(&xh);
            let c = Chamfer::compute(&a, &b)?;
            let (ga, gb) = c.gradients(&a, &b);
            for (x, g) in xp.iter().zip(&ga) {
                acc.add_point(jp.part_id, *x, *g);
            }
            for (x, g) in xh.iter().zip(&gb) {
                acc.add_point(jh.part_id, *x, *g);
            }
            value += c.value;
            record(sig, &c, &a, &b);
        }
        Ok(value)
    }
}

/// Canonical-frame points of a joint.
pub(crate) fn joint_points(parts: &[PointCloud], j: &Joint) -> Result<Vec<Vec3>> {
    let part = &parts[j.part_id];
    j.point_indices
        .iter()
        .map(|&i| {
            part.points()
                .get(i)
                .copied()
                .ok_or_else(|| Error::invalid(format!("joint {} index {i} out of range", j.id)))
        })
        .collect()
}

/// Gradient of a scalar with respect to the seven parameters of `pose`,
/// given its gradient `g` with respect to the posed point `R x + t`; the
/// quaternion part is projected onto the tangent space.
pub(crate) fn point_gradient(pose: &Pose, x: Vec3, g: Vec3) -> [f64; 7] {
    let mut acc = Accumulator::new(std::slice::from_ref(pose), true);
    acc.add_point(0, x, g);
    acc.finish(std::slice::from_ref(pose))[0]
}

fn record(sig: &mut Vec<(usize, Vec3)>, c: &Chamfer, a: &[Vec3], b: &[Vec3]) {
    sig.extend(c.a_to_b.iter().map(|&(j, _)| (j, b[j])));
    sig.extend(c.b_to_a.iter().map(|&(i, _)| (i, a[i])));
}

fn rotate_all(pose: &Pose, points: &[Vec3]) -> Vec<Vec3> {
    let m = pose.rotation.to_matrix();
    points.iter().map(|p| mat_vec(&m, *p)).collect()
}

/// Chain rule from point gradients to pose parameters.
struct Accumulator {
    enabled: bool,
    derivs: Vec<[Mat3; 4]>,
    grad: Vec<[f64; 7]>,
}

impl Accumulator {
    fn new(poses: &[Pose], enabled: bool) -> Self {
        Self {
            enabled,
            derivs: poses.iter().map(|p| p.rotation.matrix_derivatives()).collect(),
            grad: vec![[0.0; 7]; poses.len()],
        }
    }

    fn add_translation(&mut self, part: usize, g: Vec3) {
        if !self.enabled {
            return;
        }
        for (slot, gk) in self.grad[part][4..].iter_mut().zip(g) {
            *slot += gk;
        }
    }

    /// `g` is the gradient with respect to `R x`.
    fn add_rotation(&mut self, part: usize, x: Vec3, g: Vec3) {
        if !self.enabled {
            return;
        }
        for k in 0..4 {
            let d = mat_vec(&self.derivs[part][k], x);
            self.grad[part][k] += g[0] * d[0] + g[1] * d[1] + g[2] * d[2];
        }
    }

    /// `g` is the gradient with respect to `R x + t`.
    fn add_point(&mut self, part: usize, x: Vec3, g: Vec3) {
        self.add_rotation(part, x, g);
        self.add_translation(part, g);
    }

    fn finish(mut self, poses: &[Pose]) -> Vec<[f64; 7]> {
        for (g, p) in self.grad.iter_mut().zip(poses) {
            let q = [p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z];
            let along: f64 = (0..4).map(|k| g[k] * q[k]).sum();
            for k in 0..4 {
                g[k] -= along * q[k];
            }
        }
        self.grad
    }
}
