//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use asmforge::dataset::ShapeInstance;
use asmforge::geom::{Pose, Quat, Vec3};
use rand::Rng;

pub fn sq_dist(a: Vec3, b: Vec3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Sum over both directions of squared nearest-neighbour distances, by
/// exhaustive search.
pub fn chamfer_oracle(a: &[Vec3], b: &[Vec3]) -> f64 {
    let one_way = |from: &[Vec3], to: &[Vec3]| -> f64 {
        from.iter()
            .map(|p| to.iter().map(|q| sq_dist(*p, *q)).fold(f64::INFINITY, f64::min))
            .sum()
    };
    one_way(a, b) + one_way(b, a)
}

/// Every permutation of `0..n`, lexicographic.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Minimum assignment cost of a square matrix by enumeration.
pub fn assignment_oracle(cost: &[Vec<f64>]) -> f64 {
    permutations(cost.len())
        .iter()
        .map(|p| p.iter().enumerate().map(|(r, &c)| cost[r][c]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Every permutation that maps each class onto itself.
pub fn class_permutations(classes: &[Vec<usize>], n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![(0..n).collect::<Vec<_>>()];
    for class in classes.iter().filter(|c| c.len() > 1) {
        let orders = permutations(class.len());
        out = out
            .into_iter()
            .flat_map(|base| {
                orders.iter().map(move |o| {
                    let mut p = base.clone();
                    for (k, &slot) in class.iter().enumerate() {
                        p[slot] = class[o[k]];
                    }
                    p
                })
            })
            .collect();
    }
    out
}

/// A uniformly chosen within-class permutation.
pub fn random_class_permutation<R: Rng>(classes: &[Vec<usize>], n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for class in classes {
        let mut shuffled = class.clone();
        for i in (1..shuffled.len()).rev() {
            let j = rng.random_range(0..=i);
            shuffled.swap(i, j);
        }
        for (&slot, &target) in class.iter().zip(&shuffled) {
            perm[slot] = target;
        }
    }
    perm
}

/// `R x + t` written out from the quaternion, independent of the library's
/// rotation code.
pub fn transform(pose: &Pose, x: Vec3) -> Vec3 {
    let Quat { w, x: qx, y: qy, z: qz } = pose.rotation;
    let m = [
        [1.0 - 2.0 * (qy * qy + qz * qz), 2.0 * (qx * qy - w * qz), 2.0 * (qx * qz + w * qy)],
        [2.0 * (qx * qy + w * qz), 1.0 - 2.0 * (qx * qx + qz * qz), 2.0 * (qy * qz - w * qx)],
        [2.0 * (qx * qz - w * qy), 2.0 * (qy * qz + w * qx), 1.0 - 2.0 * (qx * qx + qy * qy)],
    ];
    let t = pose.translation;
    [
        m[0][0] * x[0] + m[0][1] * x[1] + m[0][2] * x[2] + t[0],
        m[1][0] * x[0] + m[1][1] * x[1] + m[1][2] * x[2] + t[1],
        m[2][0] * x[0] + m[2][1] * x[1] + m[2][2] * x[2] + t[2],
    ]
}

pub fn posed(pose: &Pose, points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|p| transform(pose, *p)).collect()
}

/// Joint points of joint `id` in its part's frame.
pub fn joint_cloud(shape: &ShapeInstance, id: usize) -> Vec<Vec3> {
    let j = &shape.joints[id];
    let pts = shape.parts[j.part_id].points();
    j.point_indices.iter().map(|&i| pts[i]).collect()
}

/// Pose that rotates part `part` rigidly by `angle` about `axis` through the
/// centroid of its posed cloud.
pub fn rotate_in_place(shape: &ShapeInstance, poses: &[Pose], part: usize, axis: Vec3, angle: f64) -> Pose {
    let pose = poses[part];
    let pts = posed(&pose, shape.parts[part].points());
    let n = pts.len() as f64;
    let c = pts.iter().fold([0.0; 3], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n, a[2] + p[2] / n]);
    let q = Quat::from_axis_angle(axis, angle);
    let spin = Pose::new(q, [0.0; 3]).unwrap();
    let moved = transform(&spin, [
        pose.translation[0] - c[0],
        pose.translation[1] - c[1],
        pose.translation[2] - c[2],
    ]);
    Pose::new(q.mul(&pose.rotation), [moved[0] + c[0], moved[1] + c[1], moved[2] + c[2]]).unwrap()
}

/// Metrics computed directly from their definitions with the given part
/// assignment: per-part chamfer against the assigned ground truth and
/// per-pair chamfer of the ground-truth joint pairs.
pub struct MetricOracle {
    pub part_cds: Vec<f64>,
    pub pair_cds: Vec<f64>,
}

impl MetricOracle {
    pub fn identity(pred: &[Pose], shape: &ShapeInstance) -> Self {
        let part_cds = shape
            .parts
            .iter()
            .enumerate()
            .map(|(i, p)| chamfer_oracle(&posed(&pred[i], p.points()), &posed(&shape.gt_poses[i], p.points())))
            .collect();
        let pair_cds = shape
            .gt_pairing
            .pairs()
            .iter()
            .map(|&(a, b)| {
                let pa = posed(&pred[shape.joints[a].part_id], &joint_cloud(shape, a));
                let pb = posed(&pred[shape.joints[b].part_id], &joint_cloud(shape, b));
                chamfer_oracle(&pa, &pb)
            })
            .collect();
        Self { part_cds, pair_cds }
    }

    pub fn part_acc(&self, threshold: f64) -> f64 {
        percent(&self.part_cds, threshold)
    }

    pub fn joint_acc(&self, threshold: f64) -> f64 {
        percent(&self.pair_cds, threshold)
    }

    pub fn shape_cd(&self, shape: &ShapeInstance) -> f64 {
        let s: f64 = self.part_cds.iter().zip(&shape.parts).map(|(c, p)| c / p.len() as f64).sum();
        s / self.part_cds.len() as f64
    }

    pub fn joint_cd(&self) -> f64 {
        self.pair_cds.iter().sum::<f64>() / self.pair_cds.len() as f64
    }
}

fn percent(v: &[f64], threshold: f64) -> f64 {
    100.0 * v.iter().filter(|&&x| x < threshold).count() as f64 / v.len() as f64
}

/// Smallest distance between posed centroids of a peg and a hole that are
/// not mates: how far apart competing joints sit.
pub fn joint_separation(shape: &ShapeInstance, poses: &[Pose]) -> f64 {
    let centroid = |id: usize| {
        let pts = posed(&poses[shape.joints[id].part_id], &joint_cloud(shape, id));
        let n = pts.len() as f64;
        pts.iter().fold([0.0; 3], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n, a[2] + p[2] / n])
    };
    let mut best = f64::INFINITY;
    for &(peg, hole) in shape.gt_pairing.pairs() {
        for &(_, other) in shape.gt_pairing.pairs() {
            if other != hole {
                best = best.min(sq_dist(centroid(peg), centroid(other)).sqrt());
            }
        }
    }
    best
}
