//! Joint-annotated shape instances: joint detection, joint masks, congruent
//! part classes, synthetic furniture and the JSON shape manifest.

mod congruence;
mod generate;
mod joints;

pub use congruence::{classes_from_labels, detect_congruent_classes, DEFAULT_CONGRUENCE_EPS};
pub use generate::{
    generate_dataset, generate_plank_pair, generate_shape, shape_seed, CabinetParams, Category, CategoryParams,
    ChairParams, GenSpec, TableParams, PATCH_POINTS,
};
pub use joints::{build_joint_mask, detect_joints, DetectedJoints, JointMask, DEFAULT_JOINT_POINTS, DEFAULT_JOINT_TAU};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{mean, Pose, PointCloud, Vec3};
use crate::matching::{assign_joint_signs, JointPairing, PartConnectivityGraph, Sign};
use crate::{Error, Result};

/// Default cap on joint pairs per shape.
pub const MAX_JOINT_PAIRS: usize = 50;

/// A contact patch on one part, paired with a joint on another part.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub id: usize,
    pub part_id: usize,
    /// `None` until signs are assigned.
    pub sign: Option<Sign>,
    /// Sorted, distinct indices into the parent part cloud.
    pub point_indices: Vec<usize>,
    /// Mean of the joint points in the parent part's canonical frame.
    pub centroid: Vec3,
    /// Ground-truth mate. `None` when the pair was dropped by sign
    /// assignment.
    pub mate: Option<usize>,
}

/// One assembly problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeInstance {
    pub shape_id: String,
    pub category: String,
    /// Canonicalized part clouds.
    pub parts: Vec<PointCloud>,
    pub gt_poses: Vec<Pose>,
    /// Joint `k` has id `k`.
    pub joints: Vec<Joint>,
    pub gt_pairing: JointPairing,
    /// Partition of part ids, each class sorted, classes ordered by their
    /// smallest member.
    pub congruent_classes: Vec<Vec<usize>>,
}

/// Joint detection and congruence parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotateParams {
    pub joint_points: usize,
    pub tau: f64,
    pub congruence_eps: f64,
}

impl Default for AnnotateParams {
    fn default() -> Self {
        Self {
            joint_points: DEFAULT_JOINT_POINTS,
            tau: DEFAULT_JOINT_TAU,
            congruence_eps: DEFAULT_CONGRUENCE_EPS,
        }
    }
}

impl ShapeInstance {
    /// Assembles an instance, refreshing joint centroids, normalizing the
    /// class partition and deriving the ground-truth pairing from the
    /// signed mates.
    pub fn new(
        shape_id: impl Into<String>,
        category: impl Into<String>,
        parts: Vec<PointCloud>,
        gt_poses: Vec<Pose>,
        mut joints: Vec<Joint>,
        congruent_classes: Vec<Vec<usize>>,
    ) -> Result<Self> {
        for j in joints.iter_mut() {
            let part = parts
                .get(j.part_id)
                .ok_or_else(|| Error::invalid(format!("joint {} references missing part {}", j.id, j.part_id)))?;
            let pts = part.select(&j.point_indices)?;
            j.centroid = mean(pts.points());
        }
        let gt_pairing = JointPairing::from_pairs(
            joints
                .iter()
                .filter(|j| j.sign == Some(Sign::Peg))
                .filter_map(|j| j.mate.map(|m| (j.id, m)))
                .collect(),
        );
        let shape = ShapeInstance {
            shape_id: shape_id.into(),
            category: category.into(),
            parts,
            gt_poses,
            joints,
            gt_pairing,
            congruent_classes: normalize_classes(congruent_classes),
        };
        shape.validate()?;
        Ok(shape)
    }

    /// Builds an instance from canonical parts and their ground-truth poses:
    /// detects joints on the assembled shape, finds congruent classes and
    /// assigns peg/hole signs.
    pub fn annotate(
        shape_id: impl Into<String>,
        category: impl Into<String>,
        parts: Vec<PointCloud>,
        gt_poses: Vec<Pose>,
        params: &AnnotateParams,
    ) -> Result<Self> {
        if parts.len() != gt_poses.len() {
            return Err(Error::invalid(format!(
                "{} parts but {} poses",
                parts.len(),
                gt_poses.len()
            )));
        }
        let posed = parts
            .iter()
            .zip(&gt_poses)
            .map(|(p, q)| q.apply(p))
            .collect::<Result<Vec<_>>>()?;
        let detected = detect_joints(&posed, params.joint_points, params.tau)?;
        let classes = detect_congruent_classes(&parts, params.congruence_eps);
        let joints = sign_joints(parts.len(), &classes, detected)?;
        ShapeInstance::new(shape_id, category, parts, gt_poses, joints, classes)
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    pub fn joint(&self, id: usize) -> Result<&Joint> {
        self.joints
            .get(id)
            .ok_or_else(|| Error::invalid(format!("unknown joint {id}")))
    }

    /// Joints of a part, ascending id.
    pub fn joints_of(&self, part: usize) -> Vec<&Joint> {
        self.joints.iter().filter(|j| j.part_id == part).collect()
    }

    /// Joint points in the parent part's canonical frame.
    pub fn joint_points(&self, id: usize) -> Result<Vec<Vec3>> {
        let j = self.joint(id)?;
        Ok(j.point_indices.iter().map(|&i| self.parts[j.part_id].points()[i]).collect())
    }

    pub fn class_of(&self, part: usize) -> usize {
        self.congruent_classes
            .iter()
            .position(|c| c.contains(&part))
            .unwrap_or(usize::MAX)
    }

    /// True when the part's congruence class has at least two members.
    pub fn is_congruent(&self, part: usize) -> bool {
        self.congruent_classes
            .iter()
            .any(|c| c.len() >= 2 && c.contains(&part))
    }

    /// Number of peg-hole pairs M.
    pub fn joint_pair_count(&self) -> usize {
        self.gt_pairing.len()
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.parts.len();
        if self.gt_poses.len() != n {
            return Err(Error::invalid(format!("{n} parts but {} poses", self.gt_poses.len())));
        }
        for p in &self.gt_poses {
            p.validate()?;
        }
        for (k, j) in self.joints.iter().enumerate() {
            if j.id != k {
                return Err(Error::invalid(format!("joint at position {k} has id {}", j.id)));
            }
            if j.part_id >= n {
                return Err(Error::invalid(format!("joint {k} references missing part {}", j.part_id)));
            }
            if j.point_indices.is_empty() {
                return Err(Error::invalid(format!("joint {k} has no points")));
            }
            let len = self.parts[j.part_id].len();
            if j.point_indices.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!("joint {k} indices not sorted and distinct")));
            }
            if j.point_indices.iter().any(|&i| i >= len) {
                return Err(Error::invalid(format!("joint {k} index out of range")));
            }
            if let Some(m) = j.mate {
                let mate = self
                    .joints
                    .get(m)
                    .ok_or_else(|| Error::invalid(format!("joint {k} mate {m} missing")))?;
                if mate.mate != Some(k) {
                    return Err(Error::invalid(format!("mate relation of joint {k} is not symmetric")));
                }
                if let (Some(a), Some(b)) = (j.sign, mate.sign) {
                    if a == b {
                        return Err(Error::invalid(format!("joint {k} and its mate share a sign")));
                    }
                }
            }
        }
        let mut seen = vec![false; n];
        for class in &self.congruent_classes {
            for &p in class {
                if p >= n || seen[p] {
                    return Err(Error::invalid("congruent classes are not a partition"));
                }
                seen[p] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("congruent classes do not cover every part"));
        }
        self.gt_pairing.validate(self)?;
        Ok(())
    }

    pub fn to_manifest(&self) -> Manifest {
        Manifest {
            shape_id: self.shape_id.clone(),
            category: self.category.clone(),
            parts: self
                .parts
                .iter()
                .enumerate()
                .map(|(i, p)| ManifestPart {
                    id: i,
                    points: p.points().to_vec(),
                    gt_pose: self.gt_poses[i],
                    congruent_class: self.class_of(i),
                })
                .collect(),
            joints: self
                .joints
                .iter()
                .map(|j| ManifestJoint {
                    id: j.id,
                    part_id: j.part_id,
                    sign: j.sign,
                    point_indices: j.point_indices.clone(),
                    mate: j.mate,
                })
                .collect(),
        }
    }

    pub fn from_manifest(m: Manifest) -> Result<Self> {
        let mut parts = Vec::with_capacity(m.parts.len());
        let mut poses = Vec::with_capacity(m.parts.len());
        let mut labels = Vec::with_capacity(m.parts.len());
        for (i, p) in m.parts.into_iter().enumerate() {
            if p.id != i {
                return Err(Error::invalid(format!("part at position {i} has id {}", p.id)));
            }
            parts.push(PointCloud::new(p.points)?);
            p.gt_pose.validate()?;
            poses.push(p.gt_pose);
            labels.push(p.congruent_class);
        }
        let joints = m
            .joints
            .into_iter()
            .map(|j| Joint {
                id: j.id,
                part_id: j.part_id,
                sign: j.sign,
                point_indices: j.point_indices,
                centroid: [0.0; 3],
                mate: j.mate,
            })
            .collect();
        ShapeInstance::new(m.shape_id, m.category, parts, poses, joints, classes_from_labels(&labels))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_manifest()).expect("manifest serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        ShapeInstance::from_manifest(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ShapeInstance::from_json(&text, path)
    }
}

/// On-disk shape manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub shape_id: String,
    pub category: String,
    pub parts: Vec<ManifestPart>,
    #[serde(default)]
    pub joints: Vec<ManifestJoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPart {
    pub id: usize,
    pub points: Vec<Vec3>,
    pub gt_pose: Pose,
    pub congruent_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestJoint {
    pub id: usize,
    pub part_id: usize,
    pub sign: Option<Sign>,
    pub point_indices: Vec<usize>,
    pub mate: Option<usize>,
}

/// Keeps shapes with at most `max_pairs` joint pairs.
pub fn filter_shapes(shapes: Vec<ShapeInstance>, max_pairs: usize) -> Vec<ShapeInstance> {
    shapes
        .into_iter()
        .filter(|s| s.joint_pair_count() <= max_pairs)
        .collect()
}

fn normalize_classes(classes: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    let mut classes: Vec<Vec<usize>> = classes
        .into_iter()
        .filter(|c| !c.is_empty())
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect();
    classes.sort_by_key(|c| c[0]);
    classes
}

/// Applies part-level sign assignment to detected joint pairs.
fn sign_joints(num_parts: usize, classes: &[Vec<usize>], detected: DetectedJoints) -> Result<Vec<Joint>> {
    let mut congruent = vec![false; num_parts];
    for c in classes.iter().filter(|c| c.len() >= 2) {
        for &p in c {
            congruent[p] = true;
        }
    }
    let mut graph = PartConnectivityGraph::new(congruent);
    for &(a, b) in &detected.pairs {
        graph.add_edge(detected.joints[a].part_id, detected.joints[b].part_id)?;
    }
    let signs = assign_joint_signs(&graph);
    let mut joints = detected.joints;
    for &(a, b) in &detected.pairs {
        let (pa, pb) = (joints[a].part_id, joints[b].part_id);
        match signs.edge_signs(pa, pb) {
            Some((sa, sb)) => {
                joints[a].sign = Some(sa);
                joints[b].sign = Some(sb);
                joints[a].mate = Some(b);
                joints[b].mate = Some(a);
            }
            None => {
                joints[a].sign = Some(signs.part_signs[pa]);
                joints[b].sign = Some(signs.part_signs[pb]);
                joints[a].mate = None;
                joints[b].mate = None;
            }
        }
    }
    Ok(joints)
}

/// Groups shapes by category, preserving input order inside each group.
pub fn group_by_category(shapes: &[ShapeInstance]) -> BTreeMap<String, Vec<&ShapeInstance>> {
    let mut out: BTreeMap<String, Vec<&ShapeInstance>> = BTreeMap::new();
    for s in shapes {
        out.entry(s.category.clone()).or_default().push(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy(pairs: usize) -> ShapeInstance {
        let part = PointCloud::new(vec![[0.0; 3]]).unwrap();
        let mut joints = Vec::new();
        for k in 0..pairs {
            joints.push(Joint {
                id: 2 * k,
                part_id: 0,
                sign: Some(Sign::Peg),
                point_indices: vec![0],
                centroid: [0.0; 3],
                mate: Some(2 * k + 1),
            });
            joints.push(Joint {
                id: 2 * k + 1,
                part_id: 1,
                sign: Some(Sign::Hole),
                point_indices: vec![0],
                centroid: [0.0; 3],
                mate: Some(2 * k),
            });
        }
        ShapeInstance::new(
            format!("s{pairs}"),
            "test",
            vec![part.clone(), part],
            vec![Pose::IDENTITY; 2],
            joints,
            vec![vec![0], vec![1]],
        )
        .unwrap()
    }

    #[test]
    fn filter_boundary() {
        let kept = filter_shapes(vec![dummy(50), dummy(51)], MAX_JOINT_PAIRS);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].joint_pair_count(), 50);
        assert!(filter_shapes(vec![], MAX_JOINT_PAIRS).is_empty());
    }

    #[test]
    fn asymmetric_mate_rejected() {
        let mut s = dummy(1);
        s.joints[1].mate = None;
        assert!(s.validate().is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let s = dummy(2);
        let text = s.to_json();
        let back = ShapeInstance::from_json(&text, Path::new("mem")).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn parse_error_names_key() {
        let err = ShapeInstance::from_json(r#"{"shape_id":"a","category":"c"}"#, Path::new("x.json")).unwrap_err();
        assert!(err.to_string().contains("parts"), "{err}");
    }
}
