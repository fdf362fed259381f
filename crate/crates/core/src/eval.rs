//! Assembly metrics: part accuracy, shape chamfer, joint accuracy and joint
//! chamfer, all evaluated under the best congruent relabelling of the parts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ShapeInstance;
use crate::geom::{chamfer_distance, Pose};
use crate::losses::{joint_points, order_invariant_shape_loss, LossWeights};
use crate::matching::{reassign_gt_pairing, JointPairing};
use crate::{Error, Result};

/// A part counts as placed when its chamfer distance to ground truth is
/// below this.
pub const DEFAULT_PART_THRESHOLD: f64 = 0.1;
/// A joint pair counts as mated when its chamfer distance is below this.
pub const DEFAULT_JOINT_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub part: f64,
    pub joint: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            part: DEFAULT_PART_THRESHOLD,
            joint: DEFAULT_JOINT_THRESHOLD,
        }
    }
}

/// Predicted poses for one shape, as written to `<id>.pred.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub shape_id: String,
    pub poses: Vec<Pose>,
}

/// Metrics of one shape. Joint metrics are `None` for shapes without joint
/// pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeMetrics {
    pub shape_id: String,
    pub category: String,
    pub part_acc: f64,
    pub shape_cd: f64,
    pub joint_acc: Option<f64>,
    pub joint_cd: Option<f64>,
}

/// Per-part chamfer distances against ground truth, after relabelling
/// congruent parts. Returns the distances and the permutation used.
pub fn part_chamfers(pred: &[Pose], shape: &ShapeInstance) -> Result<(Vec<f64>, Vec<usize>)> {
    let (_, perm) = order_invariant_shape_loss(
        pred,
        &shape.gt_poses,
        &shape.parts,
        &shape.congruent_classes,
        &LossWeights::default(),
    )?;
    let cds = shape
        .parts
        .iter()
        .enumerate()
        .map(|(i, part)| {
            let a = pred[i].apply_points(part.points());
            let b = shape.gt_poses[perm[i]].apply_points(part.points());
            chamfer_distance(&a, &b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((cds, perm))
}

/// Percentage of parts whose chamfer distance to ground truth is below
/// `threshold`.
pub fn part_accuracy(pred: &[Pose], shape: &ShapeInstance, threshold: f64) -> Result<f64> {
    let (cds, _) = part_chamfers(pred, shape)?;
    Ok(percent(&cds, threshold))
}

/// Mean over parts of the per-point chamfer distance to ground truth.
pub fn shape_cd(pred: &[Pose], shape: &ShapeInstance) -> Result<f64> {
    let (cds, _) = part_chamfers(pred, shape)?;
    Ok(normalized_mean(&cds, shape))
}

/// Chamfer distance of each ground-truth joint pair under the predicted
/// poses, with the pairing relabelled through `perm`.
pub fn joint_chamfers(pred: &[Pose], shape: &ShapeInstance, perm: &[usize]) -> Result<Vec<f64>> {
    let pairing = reassign_gt_pairing(shape, perm)?;
    pair_chamfers(pred, shape, &pairing)
}

/// Chamfer distance of each pair in `pairing` under `poses`.
pub fn pair_chamfers(poses: &[Pose], shape: &ShapeInstance, pairing: &JointPairing) -> Result<Vec<f64>> {
    pairing
        .pairs()
        .iter()
        .map(|&(p, h)| {
            let jp = shape.joint(p)?;
            let jh = shape.joint(h)?;
            let a = poses[jp.part_id].apply_points(&joint_points(&shape.parts, jp)?);
            let b = poses[jh.part_id].apply_points(&joint_points(&shape.parts, jh)?);
            chamfer_distance(&a, &b)
        })
        .collect()
}

/// Percentage of ground-truth joint pairs mated within `threshold`.
pub fn joint_accuracy(pred: &[Pose], shape: &ShapeInstance, threshold: f64) -> Result<f64> {
    let cds = shape_joint_chamfers(pred, shape)?;
    Ok(percent(&cds, threshold))
}

/// Mean chamfer distance over ground-truth joint pairs.
pub fn joint_cd(pred: &[Pose], shape: &ShapeInstance) -> Result<f64> {
    let cds = shape_joint_chamfers(pred, shape)?;
    Ok(cds.iter().sum::<f64>() / cds.len() as f64)
}

fn shape_joint_chamfers(pred: &[Pose], shape: &ShapeInstance) -> Result<Vec<f64>> {
    check(pred, shape)?;
    if shape.gt_pairing.is_empty() {
        return Err(Error::UndefinedMetric(format!("shape {} has no joint pairs", shape.shape_id)));
    }
    let (_, perm) = part_chamfers(pred, shape)?;
    joint_chamfers(pred, shape, &perm)
}

/// All four metrics of one shape.
pub fn evaluate_shape(pred: &[Pose], shape: &ShapeInstance, thresholds: &Thresholds) -> Result<ShapeMetrics> {
    check(pred, shape)?;
    let (cds, perm) = part_chamfers(pred, shape)?;
    let (joint_acc, joint_cd) = if shape.gt_pairing.is_empty() {
        (None, None)
    } else {
        let jcds = joint_chamfers(pred, shape, &perm)?;
        (
            Some(percent(&jcds, thresholds.joint)),
            Some(jcds.iter().sum::<f64>() / jcds.len() as f64),
        )
    };
    Ok(ShapeMetrics {
        shape_id: shape.shape_id.clone(),
        category: shape.category.clone(),
        part_acc: percent(&cds, thresholds.part),
        shape_cd: normalized_mean(&cds, shape),
        joint_acc,
        joint_cd,
    })
}

fn check(pred: &[Pose], shape: &ShapeInstance) -> Result<()> {
    if pred.len() != shape.num_parts() {
        return Err(Error::invalid(format!(
            "{} predicted poses for {} parts of shape {}",
            pred.len(),
            shape.num_parts(),
            shape.shape_id
        )));
    }
    pred.iter().try_for_each(Pose::validate)
}

fn percent(values: &[f64], threshold: f64) -> f64 {
    let hits = values.iter().filter(|&&v| v < threshold).count();
    100.0 * hits as f64 / values.len().max(1) as f64
}

fn normalized_mean(cds: &[f64], shape: &ShapeInstance) -> f64 {
    let total: f64 = cds.iter().zip(&shape.parts).map(|(c, p)| c / p.len() as f64).sum();
    total / cds.len().max(1) as f64
}

/// One row of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub category: String,
    pub shape_cd: f64,
    pub part_acc: f64,
    pub joint_cd: Option<f64>,
    pub joint_acc: Option<f64>,
    pub n_shapes: usize,
}

/// Aggregate metrics: one row per category, sorted by name, then an
/// `average` row over every evaluated shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
    pub shapes: Vec<ShapeMetrics>,
    /// Shapes without a prediction.
    pub missing: Vec<String>,
    /// Predictions without a shape.
    pub unmatched: Vec<String>,
}

pub const CSV_HEADER: &str = "category,shape_cd,part_acc,joint_cd,joint_acc,n_shapes";

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{},{},{}",
                r.category,
                r.shape_cd,
                r.part_acc,
                opt(r.joint_cd),
                opt(r.joint_acc),
                r.n_shapes
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric report serializes")
    }
}

/// Evaluates every shape that has a prediction. Shapes and predictions that
/// do not match up are listed rather than treated as errors.
pub fn evaluate_dataset(
    predictions: &BTreeMap<String, Vec<Pose>>,
    shapes: &[ShapeInstance],
    thresholds: &Thresholds,
) -> Result<MetricReport> {
    let mut sorted: Vec<&ShapeInstance> = shapes.iter().collect();
    sorted.sort_by(|a, b| a.shape_id.cmp(&b.shape_id));
    let missing: Vec<String> = sorted
        .iter()
        .filter(|s| !predictions.contains_key(&s.shape_id))
        .map(|s| s.shape_id.clone())
        .collect();
    let unmatched: Vec<String> = predictions
        .keys()
        .filter(|id| !sorted.iter().any(|s| &s.shape_id == *id))
        .cloned()
        .collect();
    if predictions.is_empty() {
        log::warn!("no predictions to evaluate");
    }
    let metrics = sorted
        .par_iter()
        .filter_map(|s| predictions.get(&s.shape_id).map(|p| evaluate_shape(p, s, thresholds)))
        .collect::<Result<Vec<_>>>()?;

    let mut by_category: BTreeMap<&str, Vec<&ShapeMetrics>> = BTreeMap::new();
    for m in &metrics {
        by_category.entry(&m.category).or_default().push(m);
    }
    let mut rows: Vec<ReportRow> = by_category.iter().map(|(c, ms)| aggregate(c, ms)).collect();
    if !metrics.is_empty() {
        rows.push(aggregate("average", &metrics.iter().collect::<Vec<_>>()));
    }
    Ok(MetricReport {
        rows,
        shapes: metrics,
        missing,
        unmatched,
    })
}

fn aggregate(category: &str, ms: &[&ShapeMetrics]) -> ReportRow {
    let mean = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    let n = ms.len() as f64;
    ReportRow {
        category: category.to_string(),
        shape_cd: ms.iter().map(|m| m.shape_cd).sum::<f64>() / n,
        part_acc: ms.iter().map(|m| m.part_acc).sum::<f64>() / n,
        joint_cd: mean(ms.iter().filter_map(|m| m.joint_cd).collect()),
        joint_acc: mean(ms.iter().filter_map(|m| m.joint_acc).collect()),
        n_shapes: ms.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_plank_pair, generate_shape, Category, GenSpec};

    fn chair() -> ShapeInstance {
        generate_shape(&GenSpec::new(Category::Chair, 200), "chair_t", 3).unwrap()
    }

    #[test]
    fn ground_truth_is_perfect() {
        let s = chair();
        let m = evaluate_shape(&s.gt_poses, &s, &Thresholds::default()).unwrap();
        assert_eq!(m.part_acc, 100.0);
        assert_eq!(m.shape_cd, 0.0);
        assert_eq!(m.joint_acc, Some(100.0));
        assert!(m.joint_cd.unwrap() <= 1e-4);
    }

    #[test]
    fn displaced_part_counts_against_accuracy() {
        let s = chair();
        let mut pred = s.gt_poses.clone();
        pred[1] = Pose::new(pred[1].rotation, [pred[1].translation[0] + 1.0, pred[1].translation[1], pred[1].translation[2]]).unwrap();
        let m = evaluate_shape(&pred, &s, &Thresholds::default()).unwrap();
        assert!((m.part_acc - 500.0 / 6.0).abs() < 1e-9);
        assert!(m.shape_cd > 0.0);
    }

    #[test]
    fn jointless_shape_has_no_joint_metrics() {
        let mut s = generate_plank_pair([0.6, 0.4, 0.2], 64, 1).unwrap();
        for j in &mut s.joints {
            j.mate = None;
        }
        s.gt_pairing = JointPairing::default();
        assert!(matches!(joint_accuracy(&s.gt_poses, &s, 0.01), Err(Error::UndefinedMetric(_))));
        let m = evaluate_shape(&s.gt_poses, &s, &Thresholds::default()).unwrap();
        assert_eq!(m.joint_acc, None);
        assert_eq!(m.joint_cd, None);
    }

    #[test]
    fn dataset_report_lists_mismatches() {
        let s = chair();
        let mut preds = BTreeMap::new();
        preds.insert(s.shape_id.clone(), s.gt_poses.clone());
        preds.insert("ghost".to_string(), vec![Pose::IDENTITY]);
        let other = generate_plank_pair([0.6, 0.4, 0.2], 64, 1).unwrap();
        let r = evaluate_dataset(&preds, &[s, other], &Thresholds::default()).unwrap();
        assert_eq!(r.missing, vec!["plank_pair".to_string()]);
        assert_eq!(r.unmatched, vec!["ghost".to_string()]);
        assert_eq!(r.rows.len(), 2);
        assert!(r.to_csv().starts_with(CSV_HEADER));
    }

    #[test]
    fn empty_predictions_give_empty_table() {
        let r = evaluate_dataset(&BTreeMap::new(), &[chair()], &Thresholds::default()).unwrap();
        assert!(r.rows.is_empty());
        assert_eq!(r.to_csv(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn wrong_pose_count_is_rejected() {
        let s = chair();
        assert!(evaluate_shape(&[Pose::IDENTITY], &s, &Thresholds::default()).is_err());
    }
}
