//! Shape losses (translation, rotation, assembly) and joint losses (flip,
//! coarse, fine), each with an analytic gradient with respect to the pose
//! parameters, plus order-invariant supervision over congruent parts.
//!
//! Chamfer-based gradients hold nearest-neighbour correspondences fixed,
//! which is exact away from the measure-zero set where a correspondence
//! switches.

mod gradcheck;
mod terms;

pub use gradcheck::{gradient_check, random_perturbation, GradCheckConfig, GradCheckReport};
pub use terms::{Problem, TermValue};
pub(crate) use gradcheck::random_unit;
pub(crate) use terms::{joint_points, point_gradient};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::ShapeInstance;
use crate::geom::{PointCloud, Pose};
use crate::matching::{hungarian, reassign_gt_pairing, JointPairing};
use crate::{Error, Result};

/// One loss term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Translation,
    Rotation,
    Assembly,
    Flip,
    Coarse,
    Fine,
}

impl Term {
    pub const ALL: [Term; 6] = [
        Term::Translation,
        Term::Rotation,
        Term::Assembly,
        Term::Flip,
        Term::Coarse,
        Term::Fine,
    ];
    pub const SHAPE: [Term; 3] = [Term::Translation, Term::Rotation, Term::Assembly];
    pub const JOINT: [Term; 3] = [Term::Flip, Term::Coarse, Term::Fine];

    pub fn as_str(self) -> &'static str {
        match self {
            Term::Translation => "translation",
            Term::Rotation => "rotation",
            Term::Assembly => "assembly",
            Term::Flip => "flip",
            Term::Coarse => "coarse",
            Term::Fine => "fine",
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Term {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Term::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown loss term {s:?}")))
    }
}

/// Term weights. Defaults: translation 1, rotation 10, assembly 1, flip 1,
/// coarse 5, fine 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub translation: f64,
    pub rotation: f64,
    pub assembly: f64,
    pub flip: f64,
    pub coarse: f64,
    pub fine: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            translation: 1.0,
            rotation: 10.0,
            assembly: 1.0,
            flip: 1.0,
            coarse: 5.0,
            fine: 1.0,
        }
    }
}

impl LossWeights {
    pub fn get(&self, term: Term) -> f64 {
        match term {
            Term::Translation => self.translation,
            Term::Rotation => self.rotation,
            Term::Assembly => self.assembly,
            Term::Flip => self.flip,
            Term::Coarse => self.coarse,
            Term::Fine => self.fine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if Term::ALL.iter().any(|&t| !(self.get(t) >= 0.0 && self.get(t).is_finite())) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Unweighted term values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub translation: f64,
    pub rotation: f64,
    pub assembly: f64,
    pub flip: f64,
    pub coarse: f64,
    pub fine: f64,
}

impl LossTerms {
    pub fn get(&self, term: Term) -> f64 {
        match term {
            Term::Translation => self.translation,
            Term::Rotation => self.rotation,
            Term::Assembly => self.assembly,
            Term::Flip => self.flip,
            Term::Coarse => self.coarse,
            Term::Fine => self.fine,
        }
    }

    pub(crate) fn set(&mut self, term: Term, v: f64) {
        *match term {
            Term::Translation => &mut self.translation,
            Term::Rotation => &mut self.rotation,
            Term::Assembly => &mut self.assembly,
            Term::Flip => &mut self.flip,
            Term::Coarse => &mut self.coarse,
            Term::Fine => &mut self.fine,
        } = v;
    }
}

/// Term values, weighted totals and the gradient of the weighted sum of the
/// evaluated terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub terms: LossTerms,
    pub shape_total: f64,
    pub joint_total: f64,
    #[serde(skip)]
    pub gradient: Vec<[f64; 7]>,
}

impl LossReport {
    pub fn total(&self) -> f64 {
        self.shape_total + self.joint_total
    }
}

/// Evaluates `terms` and combines them with `weights`. Terms not listed read
/// as zero.
pub fn evaluate(problem: &Problem<'_>, poses: &[Pose], weights: &LossWeights, terms: &[Term]) -> Result<LossReport> {
    weights.validate()?;
    let mut values = LossTerms::default();
    let mut gradient = vec![[0.0; 7]; problem.num_parts()];
    for &t in terms {
        let tv = problem.evaluate(t, poses)?;
        values.set(t, tv.value);
        let w = weights.get(t);
        for (g, d) in gradient.iter_mut().zip(&tv.gradient) {
            for k in 0..7 {
                g[k] += w * d[k];
            }
        }
    }
    let weighted = |set: &[Term]| set.iter().map(|&t| weights.get(t) * values.get(t)).sum::<f64>();
    Ok(LossReport {
        terms: values,
        shape_total: weighted(&Term::SHAPE),
        joint_total: weighted(&Term::JOINT),
        gradient,
    })
}

fn check_counts(poses: &[Pose], gt_poses: &[Pose], parts: &[PointCloud]) -> Result<()> {
    if poses.len() != parts.len() || gt_poses.len() != parts.len() {
        return Err(Error::invalid(format!(
            "{} poses and {} ground-truth poses for {} parts",
            poses.len(),
            gt_poses.len(),
            parts.len()
        )));
    }
    Ok(())
}

/// Shape loss against ground truth in the given part order.
pub fn shape_loss(poses: &[Pose], gt_poses: &[Pose], parts: &[PointCloud], weights: &LossWeights) -> Result<LossReport> {
    check_counts(poses, gt_poses, parts)?;
    let pairing = JointPairing::default();
    let problem = Problem {
        parts,
        gt: gt_poses.to_vec(),
        joints: &[],
        pairing: &pairing,
        flip_mask: vec![true; parts.len()],
    };
    evaluate(&problem, poses, weights, &Term::SHAPE)
}

/// `out[i] = gt_poses[perm[i]]`.
pub fn permute_poses(gt_poses: &[Pose], perm: &[usize]) -> Vec<Pose> {
    perm.iter().map(|&k| gt_poses[k]).collect()
}

/// Shape loss under the best ground-truth assignment within each congruent
/// class. Returns the report and the permutation: part `i` is supervised by
/// `gt_poses[perm[i]]`.
///
/// Within each class the assignment minimizes the per-part translation and
/// rotation costs by Hungarian matching. The identity assignment is kept if
/// its full loss, assembly term included, is strictly lower.
pub fn order_invariant_shape_loss(
    poses: &[Pose],
    gt_poses: &[Pose],
    parts: &[PointCloud],
    classes: &[Vec<usize>],
    weights: &LossWeights,
) -> Result<(LossReport, Vec<usize>)> {
    check_counts(poses, gt_poses, parts)?;
    weights.validate()?;
    let n = parts.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut seen = vec![false; n];
    for class in classes {
        for &i in class {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid("congruent classes are not a partition"));
            }
        }
        if class.len() < 2 {
            continue;
        }
        let mut cost = Vec::with_capacity(class.len());
        for &i in class {
            let mut row = Vec::with_capacity(class.len());
            for &k in class {
                row.push(part_cost(&poses[i], &gt_poses[k], &parts[i], weights)?);
            }
            cost.push(row);
        }
        let assignment = hungarian(&cost)?;
        for (r, c) in assignment.pairs() {
            perm[class[r]] = class[c];
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::invalid("congruent classes do not cover every part"));
    }
    let chosen = shape_loss(poses, &permute_poses(gt_poses, &perm), parts, weights)?;
    if perm.iter().enumerate().any(|(i, &k)| i != k) {
        let identity = shape_loss(poses, gt_poses, parts, weights)?;
        if identity.total() < chosen.total() {
            return Ok((identity, (0..n).collect()));
        }
    }
    Ok((chosen, perm))
}

fn part_cost(pose: &Pose, gt: &Pose, part: &PointCloud, weights: &LossWeights) -> Result<f64> {
    let single = std::slice::from_ref(part);
    let r = shape_loss(std::slice::from_ref(pose), std::slice::from_ref(gt), single, &LossWeights {
        assembly: 0.0,
        ..*weights
    })?;
    Ok(weights.translation * r.terms.translation + weights.rotation * r.terms.rotation)
}

/// Joint loss against the shape's own ground truth and the given pairing,
/// with the flip term over every part.
pub fn joint_loss(poses: &[Pose], shape: &ShapeInstance, pairing: &JointPairing, weights: &LossWeights) -> Result<LossReport> {
    joint_loss_with(poses, shape, &shape.gt_poses, pairing, weights, &vec![true; shape.num_parts()])
}

/// Joint loss with explicit per-part ground truth (already permuted) and a
/// mask selecting the parts covered by the flip term.
pub fn joint_loss_with(
    poses: &[Pose],
    shape: &ShapeInstance,
    gt: &[Pose],
    pairing: &JointPairing,
    weights: &LossWeights,
    flip_mask: &[bool],
) -> Result<LossReport> {
    let problem = Problem {
        parts: &shape.parts,
        gt: gt.to_vec(),
        joints: &shape.joints,
        pairing,
        flip_mask: flip_mask.to_vec(),
    };
    evaluate(&problem, poses, weights, &Term::JOINT)
}

/// Joint loss after order-invariant reassignment: the congruent permutation
/// comes from [`order_invariant_shape_loss`] and both the ground-truth poses
/// and the ground-truth pairing are relabelled through it.
pub fn order_invariant_joint_loss(
    poses: &[Pose],
    shape: &ShapeInstance,
    weights: &LossWeights,
) -> Result<(LossReport, Vec<usize>, JointPairing)> {
    let (_, perm) = order_invariant_shape_loss(poses, &shape.gt_poses, &shape.parts, &shape.congruent_classes, weights)?;
    let pairing = reassign_gt_pairing(shape, &perm)?;
    let gt = permute_poses(&shape.gt_poses, &perm);
    let report = joint_loss_with(poses, shape, &gt, &pairing, weights, &vec![true; shape.num_parts()])?;
    Ok((report, perm, pairing))
}
