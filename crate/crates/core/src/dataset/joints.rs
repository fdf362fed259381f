use super::Joint;
use crate::geom::{nearest_all, PointCloud};
use crate::matching::Sign;
use crate::{Error, Result};

/// Points per joint.
pub const DEFAULT_JOINT_POINTS: usize = 50;
/// Contact threshold on the minimum inter-part distance.
pub const DEFAULT_JOINT_TAU: f64 = 0.05;

/// Unsigned joints and the joint-id pairs that mate them.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedJoints {
    /// Joint `k` has id `k`. Signs and mates are unset.
    pub joints: Vec<Joint>,
    /// `(joint on lower part, joint on higher part)`, one per contact.
    pub pairs: Vec<(usize, usize)>,
}

/// Finds contacts between assembled parts. Every unordered part pair whose
/// minimum inter-point distance is below `tau` yields one joint on each part:
/// its `k` points closest to the other part (ties to the lowest index).
pub fn detect_joints(parts: &[PointCloud], k: usize, tau: f64) -> Result<DetectedJoints> {
    if k == 0 {
        return Err(Error::invalid("joints need at least one point"));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::invalid(format!("contact threshold {tau} must be positive")));
    }
    if let Some(i) = parts.iter().position(|p| p.len() < k) {
        return Err(Error::invalid(format!(
            "part {i} has {} points, fewer than the {k} needed per joint",
            parts[i].len()
        )));
    }
    let tau2 = tau * tau;
    let mut joints = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            let i_to_j = nearest_all(parts[i].points(), parts[j].points());
            let min = i_to_j.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
            if min >= tau2 {
                continue;
            }
            let j_to_i = nearest_all(parts[j].points(), parts[i].points());
            let a = joints.len();
            joints.push(unsigned_joint(a, i, closest(&i_to_j, k)));
            joints.push(unsigned_joint(a + 1, j, closest(&j_to_i, k)));
            pairs.push((a, a + 1));
        }
    }
    Ok(DetectedJoints { joints, pairs })
}

fn unsigned_joint(id: usize, part_id: usize, point_indices: Vec<usize>) -> Joint {
    Joint {
        id,
        part_id,
        sign: None,
        point_indices,
        centroid: [0.0; 3],
        mate: None,
    }
}

/// Indices of the `k` smallest distances, returned sorted by index.
fn closest(matches: &[(usize, f64)], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..matches.len()).collect();
    order.sort_by(|&a, &b| matches[a].1.total_cmp(&matches[b].1).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Per-point joint labels of one part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointMask {
    /// `-1` peg, `+1` hole, `0` no joint.
    pub labels: Vec<i8>,
    /// Joint that owns each point.
    pub joint_ids: Vec<Option<usize>>,
}

impl JointMask {
    pub fn count(&self, label: i8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Labels every point of `part` by the joint covering it. A point covered by
/// several joints takes the lowest joint id.
pub fn build_joint_mask(part: &PointCloud, joints: &[&Joint]) -> Result<JointMask> {
    let mut sorted: Vec<&Joint> = joints.to_vec();
    sorted.sort_by_key(|j| j.id);
    let mut labels = vec![0i8; part.len()];
    let mut joint_ids = vec![None; part.len()];
    for j in sorted {
        let sign: Sign = j
            .sign
            .ok_or_else(|| Error::InvalidState(format!("joint {} has no sign", j.id)))?;
        for &i in &j.point_indices {
            if i >= part.len() {
                return Err(Error::invalid(format!("joint {} index {i} out of range", j.id)));
            }
            if joint_ids[i].is_none() {
                joint_ids[i] = Some(j.id);
                labels[i] = sign.mask_value();
            }
        }
    }
    Ok(JointMask { labels, joint_ids })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(z: f64, n: usize) -> PointCloud {
        let mut pts = Vec::new();
        for a in 0..n {
            for b in 0..n {
                pts.push([a as f64 / (n - 1) as f64, b as f64 / (n - 1) as f64, z]);
            }
        }
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn touching_faces_give_one_pair() {
        let d = detect_joints(&[grid(0.0, 8), grid(0.0, 8)], 50, 0.05).unwrap();
        assert_eq!(d.pairs, vec![(0, 1)]);
        assert_eq!(d.joints[0].point_indices.len(), 50);
        assert_eq!(d.joints[1].part_id, 1);
    }

    #[test]
    fn separated_parts_have_no_joints() {
        let d = detect_joints(&[grid(0.0, 8), grid(0.2, 8)], 50, 0.05).unwrap();
        assert!(d.joints.is_empty());
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(detect_joints(&[grid(0.0, 5), grid(0.0, 8)], 50, 0.05).is_err());
    }

    fn joint(id: usize, sign: Option<Sign>, idx: std::ops::Range<usize>) -> Joint {
        Joint {
            id,
            part_id: 0,
            sign,
            point_indices: idx.collect(),
            centroid: [0.0; 3],
            mate: None,
        }
    }

    #[test]
    fn mask_counts() {
        let part = grid(0.0, 12);
        let empty = build_joint_mask(&part, &[]).unwrap();
        assert!(empty.labels.iter().all(|&l| l == 0));

        let peg = joint(0, Some(Sign::Peg), 0..50);
        let hole = joint(1, Some(Sign::Hole), 50..100);
        let m = build_joint_mask(&part, &[&hole, &peg]).unwrap();
        assert_eq!(m.count(-1), 50);
        assert_eq!(m.count(1), 50);
        assert_eq!(m.count(0), part.len() - 100);
    }

    #[test]
    fn overlap_takes_lowest_id() {
        let part = grid(0.0, 12);
        let a = joint(3, Some(Sign::Hole), 0..50);
        let b = joint(1, Some(Sign::Peg), 25..75);
        let m = build_joint_mask(&part, &[&a, &b]).unwrap();
        assert_eq!(m.joint_ids[30], Some(1));
        assert_eq!(m.labels[30], -1);
        assert_eq!(m.labels[10], 1);
    }

    #[test]
    fn unsigned_joint_is_state_error() {
        let part = grid(0.0, 12);
        let a = joint(0, None, 0..50);
        assert!(matches!(build_joint_mask(&part, &[&a]), Err(Error::InvalidState(_))));
    }
}
