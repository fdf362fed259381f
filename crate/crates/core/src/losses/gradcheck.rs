use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Problem, Term};
use crate::dataset::ShapeInstance;
use crate::geom::{compose_pose, dist2, Pose, PoseDelta, Quat, Vec3};
use crate::Result;

/// Configurations tried per trial before the trial counts as skipped.
const ATTEMPTS_PER_TRIAL: u64 = 20;
/// Targets closer than this are the same point for tie detection.
const COINCIDENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
    /// Central difference step on each raw pose parameter.
    pub step: f64,
    pub max_rotation_deg: f64,
    pub max_translation: f64,
    /// Multiplies the analytic gradient; anything but 1 is a negative
    /// control that the check must catch.
    pub gradient_scale: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            tol: 1e-4,
            seed: 0,
            step: 1e-5,
            max_rotation_deg: 20.0,
            max_translation: 0.1,
            gradient_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub term: Term,
    pub max_rel_error: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub passed: bool,
}

/// Random rotation of up to `max_rot` radians and translation of up to
/// `max_trans` applied on top of `pose`.
pub fn random_perturbation<R: Rng + ?Sized>(pose: &Pose, rng: &mut R, max_rot: f64, max_trans: f64) -> Result<Pose> {
    let angle = rng.random_range(0.0..=max_rot.max(0.0));
    let dist = rng.random_range(0.0..=max_trans.max(0.0));
    let q = Quat::from_axis_angle(random_unit(rng), angle);
    let t = random_unit(rng).map(|c| c * dist);
    compose_pose(&PoseDelta::new(q, t)?, pose)
}

/// Uniform direction on the unit sphere.
pub(crate) fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n2: f64 = v.iter().map(|c| c * c).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Compares analytic and central finite-difference gradients of one term at
/// random perturbations of the ground-truth poses, under the ground-truth
/// pairing.
///
/// A configuration is discarded when a nearest-neighbour correspondence
/// switches within one step, since the term is not differentiable there.
/// Switching between coincident targets is harmless and does not count.
pub fn gradient_check(term: Term, shape: &ShapeInstance, config: &GradCheckConfig) -> Result<GradCheckReport> {
    let problem = Problem {
        parts: &shape.parts,
        gt: shape.gt_poses.clone(),
        joints: &shape.joints,
        pairing: &shape.gt_pairing,
        flip_mask: vec![true; shape.num_parts()],
    };
    let mut worst = 0.0f64;
    let mut evaluated = 0;
    let mut skipped = 0;
    for trial in 0..config.trials as u64 {
        let mut done = false;
        for attempt in 0..ATTEMPTS_PER_TRIAL {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(trial * ATTEMPTS_PER_TRIAL + attempt);
            let poses = shape
                .gt_poses
                .iter()
                .map(|p| {
                    random_perturbation(
                        p,
                        &mut rng,
                        config.max_rotation_deg.to_radians(),
                        config.max_translation,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(err) = compare(&problem, term, &poses, config)? {
                worst = worst.max(err);
                evaluated += 1;
                done = true;
                break;
            }
        }
        if !done {
            skipped += 1;
        }
    }
    Ok(GradCheckReport {
        term,
        max_rel_error: worst,
        evaluated,
        skipped,
        passed: evaluated > 0 && worst <= config.tol,
    })
}

/// Relative error `‖g_a − g_n‖ / max(‖g_a‖, ‖g_n‖)`, or `None` at a
/// correspondence switch.
fn compare(problem: &Problem<'_>, term: Term, poses: &[Pose], config: &GradCheckConfig) -> Result<Option<f64>> {
    let base = problem.evaluate(term, poses)?;
    let h = config.step;
    let mut diff2 = 0.0;
    let mut na2 = 0.0;
    let mut nn2 = 0.0;
    let mut moved = poses.to_vec();
    for i in 0..poses.len() {
        let params = poses[i].params();
        for k in 0..7 {
            let mut eval = |delta: f64| -> Result<Option<f64>> {
                let mut p = params;
                p[k] += delta;
                moved[i] = Pose::from_params(&p)?;
                let v = problem.value(term, &moved)?;
                Ok(same_matches(&base.signature, &v.signature).then_some(v.value))
            };
            let (Some(plus), Some(minus)) = (eval(h)?, eval(-h)?) else {
                return Ok(None);
            };
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = base.gradient[i][k] * config.gradient_scale;
            diff2 += (analytic - numeric).powi(2);
            na2 += analytic * analytic;
            nn2 += numeric * numeric;
        }
        moved[i] = poses[i];
    }
    let scale = na2.sqrt().max(nn2.sqrt());
    Ok(Some(if scale < 1e-12 { diff2.sqrt() } else { diff2.sqrt() / scale }))
}

fn same_matches(a: &[(usize, Vec3)], b: &[(usize, Vec3)]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.0 == y.0 || dist2(x.1, y.1) <= COINCIDENT * COINCIDENT)
}
