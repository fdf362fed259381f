//! Alternating pose optimization. Part stages descend on the continuous
//! objective with the joint pairing frozen; joint stages re-propose the
//! pairing from posed joint centroids and then descend on the joint terms for
//! the parts that carry paired joints.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ShapeInstance;
use crate::eval::{evaluate_shape, pair_chamfers, ShapeMetrics, Thresholds};
use crate::geom::{compose_pose, dist2, norm, sub, PointCloud, Pose, PoseDelta, Quat, Vec3};
use crate::graph::{aggregate_joint_to_part, compute_connectivity, ConnectivityMatrix, DEFAULT_TEMPERATURE};
use crate::losses::{
    order_invariant_shape_loss, permute_poses, point_gradient, random_unit, LossTerms, LossWeights, Problem, Term,
};
use crate::matching::{propose_pairing, reassign_gt_pairing, JointPairing, Sign};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Part,
    Joint,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Part => "part",
            Stage::Joint => "joint",
        })
    }
}

/// What the solver is allowed to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Starts from perturbed ground truth and fits shape and joint losses
    /// against it, with congruent parts supervised order-invariantly.
    SupervisedFit,
    /// Starts from identity poses and uses only the coarse and fine joint
    /// terms plus the anti-collapse penalty; part stages leave out the fine
    /// term. Ground truth is used for reporting metrics only.
    JointDriven,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::SupervisedFit => "supervised-fit",
            Mode::JointDriven => "joint-driven",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised-fit" => Ok(Mode::SupervisedFit),
            "joint-driven" => Ok(Mode::JointDriven),
            _ => Err(Error::invalid(format!("unknown solver mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub schedule: Vec<Stage>,
    pub steps_per_stage: usize,
    /// Initial step size of the line search.
    pub step_size: f64,
    pub max_halvings: usize,
    pub temperature: f64,
    pub anti_collapse_weight: f64,
    pub mode: Mode,
    /// Exact rotation angle of the initial perturbation, in degrees.
    pub perturb_rotation_deg: f64,
    /// Exact translation length of the initial perturbation.
    pub perturb_translation: f64,
    pub weights: LossWeights,
    pub thresholds: Thresholds,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            schedule: vec![Stage::Part, Stage::Joint, Stage::Part, Stage::Joint, Stage::Joint],
            steps_per_stage: 50,
            step_size: 0.05,
            max_halvings: 20,
            temperature: DEFAULT_TEMPERATURE,
            anti_collapse_weight: 10.0,
            mode: Mode::SupervisedFit,
            perturb_rotation_deg: 10.0,
            perturb_translation: 0.05,
            weights: LossWeights::default(),
            thresholds: Thresholds::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let non_negative = |v: f64| v >= 0.0 && v.is_finite();
        if !positive(self.step_size) || !positive(self.temperature) {
            return Err(Error::invalid("step size and temperature must be positive"));
        }
        if !non_negative(self.anti_collapse_weight)
            || !non_negative(self.perturb_rotation_deg)
            || !non_negative(self.perturb_translation)
        {
            return Err(Error::invalid("penalty weight and perturbation sizes must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    pub poses: Vec<Pose>,
    pub pairing: JointPairing,
    /// Affinities from the latest joint stage.
    pub connectivity: Option<ConnectivityMatrix>,
    /// Per-part max-pooled joint residuals `[centroid distance, chamfer]`
    /// from the latest joint stage.
    pub part_signals: Vec<Vec<f64>>,
    /// Step size carried between iterations.
    pub step: f64,
    /// Objective of the latest stage before its first step and after every
    /// accepted step.
    pub history: Vec<f64>,
}

/// Snapshot taken at initialization and after every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// `init`, `part` or `joint`.
    pub stage: String,
    pub poses: Vec<Pose>,
    pub pairing: JointPairing,
    /// The mode's full objective at these poses and this pairing.
    pub objective: f64,
    pub losses: LossTerms,
    pub penalty: f64,
    /// Accepted descent steps in the stage.
    pub steps: usize,
    /// The stage objective before the first step and after each accepted
    /// step; non-increasing. Empty for the initial record.
    pub objective_history: Vec<f64>,
    pub part_signals: Vec<Vec<f64>>,
    pub metrics: ShapeMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub shape_id: String,
    pub mode: Mode,
    pub records: Vec<StageRecord>,
}

impl SolveTrace {
    pub fn final_record(&self) -> Option<&StageRecord> {
        self.records.last()
    }

    pub fn final_poses(&self) -> Option<&[Pose]> {
        self.final_record().map(|r| r.poses.as_slice())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Invalid(#[from] Error),
    /// The objective became non-finite. The trace holds every stage that
    /// completed before.
    #[error("solver diverged: {source}")]
    Diverged {
        #[source]
        source: Error,
        trace: Box<SolveTrace>,
    },
}

/// Squared-hinge penalty on part centroids that come closer than the sum of
/// their inner radii: `w · Σ_{i<j} max(0, d_ij − ‖c_i − c_j‖)²`. Coincident
/// centroids are pushed apart along x, the lower-index part towards −x.
/// Returns the value and the per-part pose gradient.
pub fn anti_collapse_penalty(poses: &[Pose], parts: &[PointCloud], weight: f64) -> Result<(f64, Vec<[f64; 7]>)> {
    if poses.len() != parts.len() {
        return Err(Error::invalid(format!("{} poses for {} parts", poses.len(), parts.len())));
    }
    let local: Vec<Vec3> = parts.iter().map(PointCloud::centroid).collect();
    let radius: Vec<f64> = parts.iter().map(PointCloud::inner_radius).collect();
    let posed: Vec<Vec3> = poses.iter().zip(&local).map(|(p, c)| p.transform_point(*c)).collect();
    let mut value = 0.0;
    let mut grad_c = vec![[0.0; 3]; parts.len()];
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            let d = sub(posed[i], posed[j]);
            let dist = norm(d);
            let gap = radius[i] + radius[j] - dist;
            if gap <= 0.0 {
                continue;
            }
            value += weight * gap * gap;
            let dir = if dist > 1e-12 {
                [d[0] / dist, d[1] / dist, d[2] / dist]
            } else {
                [-1.0, 0.0, 0.0]
            };
            for k in 0..3 {
                grad_c[i][k] -= 2.0 * weight * gap * dir[k];
                grad_c[j][k] += 2.0 * weight * gap * dir[k];
            }
        }
    }
    let gradient = poses
        .iter()
        .zip(&local)
        .zip(&grad_c)
        .map(|((p, c), g)| point_gradient(p, *c, *g))
        .collect();
    Ok((value, gradient))
}

/// Applies a rotation of exactly `angle` radians about a random axis and a
/// translation of exactly `dist` in a random direction.
pub fn perturb_pose(pose: &Pose, rng: &mut ChaCha8Rng, angle: f64, dist: f64) -> Result<Pose> {
    let q = Quat::from_axis_angle(random_unit(rng), angle);
    let t = random_unit(rng).map(|c| c * dist);
    compose_pose(&PoseDelta::new(q, t)?, pose)
}

/// Floor on the part radius used to scale rotation steps.
const MIN_RADIUS: f64 = 1e-3;
/// Upper bound on the carried step size, relative to the initial one.
const MAX_STEP_GROWTH: f64 = 1024.0;

/// Joint-driven part stages align joint centroids only; the fine term joins
/// in joint stages. Large flat contact patches otherwise hold the parts in
/// the coplanar configuration they start from.
const COARSE: [Term; 1] = [Term::Coarse];
const COARSE_FINE: [Term; 2] = [Term::Coarse, Term::Fine];

struct Evaluation {
    value: f64,
    terms: LossTerms,
    penalty: f64,
    gradient: Vec<[f64; 7]>,
}

/// One frozen objective: a loss problem, the terms it uses and whether the
/// penalty applies.
struct Objective<'a> {
    problem: Problem<'a>,
    terms: &'static [Term],
    weights: LossWeights,
    penalty_weight: f64,
}

impl Objective<'_> {
    fn eval(&self, poses: &[Pose], with_gradient: bool) -> Result<Evaluation> {
        let mut terms = LossTerms::default();
        let mut value = 0.0;
        let mut gradient = vec![[0.0; 7]; poses.len()];
        for &t in self.terms {
            let tv = if with_gradient {
                self.problem.evaluate(t, poses)?
            } else {
                self.problem.value(t, poses)?
            };
            terms.set(t, tv.value);
            let w = self.weights.get(t);
            value += w * tv.value;
            add_scaled(&mut gradient, &tv.gradient, w);
        }
        let mut penalty = 0.0;
        if self.penalty_weight > 0.0 {
            let (p, g) = anti_collapse_penalty(poses, self.problem.parts, self.penalty_weight)?;
            penalty = p;
            value += p;
            add_scaled(&mut gradient, &g, 1.0);
        }
        Ok(Evaluation {
            value,
            terms,
            penalty,
            gradient,
        })
    }
}

fn add_scaled(acc: &mut [[f64; 7]], g: &[[f64; 7]], w: f64) {
    for (a, d) in acc.iter_mut().zip(g) {
        for k in 0..7 {
            a[k] += w * d[k];
        }
    }
}

pub struct Solver<'a> {
    shape: &'a ShapeInstance,
    config: &'a SolverConfig,
    rotation_scale: Vec<f64>,
}

impl<'a> Solver<'a> {
    pub fn new(shape: &'a ShapeInstance, config: &'a SolverConfig) -> Result<Self> {
        config.validate()?;
        shape.validate()?;
        Ok(Self {
            shape,
            config,
            rotation_scale: rotation_scales(&shape.parts),
        })
    }

    /// Perturbed ground truth in supervised mode, identity poses in
    /// joint-driven mode.
    pub fn init_state(&self) -> Result<SolveState> {
        let n = self.shape.num_parts();
        let (poses, pairing) = match self.config.mode {
            Mode::SupervisedFit => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                let angle = self.config.perturb_rotation_deg.to_radians();
                let poses = self
                    .shape
                    .gt_poses
                    .iter()
                    .map(|p| perturb_pose(p, &mut rng, angle, self.config.perturb_translation))
                    .collect::<Result<Vec<_>>>()?;
                let perm = self.permutation(&poses)?;
                let pairing = reassign_gt_pairing(self.shape, &perm)?;
                (poses, pairing)
            }
            Mode::JointDriven => {
                let poses = vec![Pose::IDENTITY; n];
                let pairing = match self.connectivity(&poses)? {
                    Some(r) => propose_pairing(&r)?,
                    None => JointPairing::default(),
                };
                (poses, pairing)
            }
        };
        Ok(SolveState {
            poses,
            pairing,
            connectivity: None,
            part_signals: vec![Vec::new(); n],
            step: self.config.step_size,
            history: Vec::new(),
        })
    }

    /// Descends on the mode's continuous objective with the pairing frozen.
    /// Returns the number of accepted steps.
    pub fn part_stage(&self, state: &mut SolveState) -> Result<usize> {
        let pairing = state.pairing.clone();
        let objective = match self.config.mode {
            Mode::SupervisedFit => self.supervised(&state.poses, &pairing, &Term::SHAPE)?,
            Mode::JointDriven => self.joint_driven(&pairing, &COARSE),
        };
        let active = vec![true; self.shape.num_parts()];
        self.descend(state, &objective, &active)
    }

    /// Re-proposes the pairing from the current poses, pools per-joint
    /// residuals into per-part signals, then descends on the joint terms.
    /// Only parts with at least one paired joint move.
    pub fn joint_stage(&self, state: &mut SolveState) -> Result<usize> {
        let Some(r) = self.connectivity(&state.poses)? else {
            state.part_signals = vec![Vec::new(); self.shape.num_parts()];
            state.history.clear();
            return Ok(0);
        };
        state.pairing = propose_pairing(&r)?;
        state.connectivity = Some(r);

        let cds = pair_chamfers(&state.poses, self.shape, &state.pairing)?;
        let mut signals = Vec::with_capacity(2 * cds.len());
        for (&(p, h), cd) in state.pairing.pairs().iter().zip(cds) {
            let jp = self.shape.joint(p)?;
            let jh = self.shape.joint(h)?;
            let d = dist2(
                state.poses[jp.part_id].transform_point(jp.centroid),
                state.poses[jh.part_id].transform_point(jh.centroid),
            )
            .sqrt();
            signals.push((p, vec![d, cd]));
            signals.push((h, vec![d, cd]));
        }
        state.part_signals = aggregate_joint_to_part(&signals, self.shape)?;
        let mut active = vec![false; self.shape.num_parts()];
        for (id, _) in &signals {
            active[self.shape.joint(*id)?.part_id] = true;
        }

        let pairing = state.pairing.clone();
        let objective = match self.config.mode {
            Mode::SupervisedFit => self.supervised(&state.poses, &pairing, &Term::JOINT)?,
            Mode::JointDriven => self.joint_driven(&pairing, &COARSE_FINE),
        };
        self.descend(state, &objective, &active)
    }

    /// Snapshot of the state under the mode's full objective.
    pub fn record(&self, stage: &str, state: &SolveState, steps: usize) -> Result<StageRecord> {
        let (objective, losses, penalty) = match self.config.mode {
            Mode::SupervisedFit => {
                let shape = self.supervised(&state.poses, &state.pairing, &Term::SHAPE)?;
                let joint = self.supervised(&state.poses, &state.pairing, &Term::JOINT)?;
                let a = shape.eval(&state.poses, false)?;
                let b = joint.eval(&state.poses, false)?;
                let mut terms = a.terms;
                for t in Term::JOINT {
                    terms.set(t, b.terms.get(t));
                }
                (a.value + b.value, terms, 0.0)
            }
            Mode::JointDriven => {
                let e = self.joint_driven(&state.pairing, &COARSE_FINE).eval(&state.poses, false)?;
                (e.value, e.terms, e.penalty)
            }
        };
        Ok(StageRecord {
            stage: stage.to_string(),
            poses: state.poses.clone(),
            pairing: state.pairing.clone(),
            objective,
            losses,
            penalty,
            steps,
            objective_history: if stage == "init" { Vec::new() } else { state.history.clone() },
            part_signals: state.part_signals.clone(),
            metrics: evaluate_shape(&state.poses, self.shape, &self.config.thresholds)?,
        })
    }

    /// Runs the whole schedule.
    pub fn run(&self) -> std::result::Result<SolveTrace, SolveError> {
        let mut trace = SolveTrace {
            shape_id: self.shape.shape_id.clone(),
            mode: self.config.mode,
            records: Vec::with_capacity(self.config.schedule.len() + 1),
        };
        let mut state = self.init_state()?;
        let diverged = |source: Error, trace: &SolveTrace| SolveError::Diverged {
            source,
            trace: Box::new(trace.clone()),
        };
        let rec = self.record("init", &state, 0).map_err(|e| diverged(e, &trace))?;
        if !rec.objective.is_finite() {
            return Err(diverged(Error::Numeric("initial objective is not finite".into()), &trace));
        }
        trace.records.push(rec);
        for (k, stage) in self.config.schedule.iter().enumerate() {
            let steps = match stage {
                Stage::Part => self.part_stage(&mut state),
                Stage::Joint => self.joint_stage(&mut state),
            }
            .map_err(|e| match e {
                Error::Numeric(_) => diverged(e, &trace),
                other => SolveError::Invalid(other),
            })?;
            log::debug!("{} stage {k} ({stage}): {steps} steps", self.shape.shape_id);
            let rec = self
                .record(&stage.to_string(), &state, steps)
                .map_err(|e| diverged(e, &trace))?;
            trace.records.push(rec);
        }
        Ok(trace)
    }

    fn permutation(&self, poses: &[Pose]) -> Result<Vec<usize>> {
        let (_, perm) = order_invariant_shape_loss(
            poses,
            &self.shape.gt_poses,
            &self.shape.parts,
            &self.shape.congruent_classes,
            &self.config.weights,
        )?;
        Ok(perm)
    }

    /// Ground-truth supervision relabelled through the congruent
    /// permutation that best explains `poses`.
    fn supervised<'p>(&'p self, poses: &[Pose], pairing: &'p JointPairing, terms: &'static [Term]) -> Result<Objective<'p>> {
        let perm = self.permutation(poses)?;
        Ok(Objective {
            problem: Problem {
                parts: &self.shape.parts,
                gt: permute_poses(&self.shape.gt_poses, &perm),
                joints: &self.shape.joints,
                pairing,
                flip_mask: vec![true; self.shape.num_parts()],
            },
            terms,
            weights: self.config.weights,
            penalty_weight: 0.0,
        })
    }

    fn joint_driven<'p>(&'p self, pairing: &'p JointPairing, terms: &'static [Term]) -> Objective<'p> {
        let n = self.shape.num_parts();
        Objective {
            problem: Problem {
                parts: &self.shape.parts,
                // Never read: the flip term is not part of this objective.
                gt: vec![Pose::IDENTITY; n],
                joints: &self.shape.joints,
                pairing,
                flip_mask: vec![false; n],
            },
            terms,
            weights: self.config.weights,
            penalty_weight: self.config.anti_collapse_weight,
        }
    }

    fn connectivity(&self, poses: &[Pose]) -> Result<Option<ConnectivityMatrix>> {
        let has = |s: Sign| self.shape.joints.iter().any(|j| j.sign == Some(s));
        if !has(Sign::Peg) || !has(Sign::Hole) {
            return Ok(None);
        }
        compute_connectivity(&self.shape.joints, poses, self.config.temperature).map(Some)
    }

    /// Barzilai-Borwein step `sᵀP⁻¹s / sᵀy` for the step just taken,
    /// `s = −α P g_prev`, `y = g_next − g_prev`, in the metric of the
    /// rotation preconditioner `P`. `None` when the curvature estimate is not
    /// positive.
    fn spectral_step(&self, g_prev: &[[f64; 7]], g_next: &[[f64; 7]], active: &[bool], alpha: f64) -> Option<f64> {
        let mut gpg = 0.0;
        let mut uy = 0.0;
        for i in (0..g_prev.len()).filter(|&i| active[i]) {
            for k in 0..7 {
                let p = if k < 4 { self.rotation_scale[i] } else { 1.0 };
                let u = p * g_prev[i][k];
                gpg += g_prev[i][k] * u;
                uy += u * (g_prev[i][k] - g_next[i][k]);
            }
        }
        let step = alpha * gpg / uy;
        (uy > 0.0 && step.is_finite() && step > 0.0).then_some(step)
    }

    /// Gradient descent with backtracking. Each step tries the carried step
    /// size and halves until the objective strictly decreases. The size
    /// carried to the next step is the Barzilai-Borwein estimate from the
    /// last two gradients when it is usable, and otherwise the accepted size,
    /// doubled if no halving was needed. The stage ends early when no
    /// halving helps.
    fn descend(&self, state: &mut SolveState, objective: &Objective<'_>, active: &[bool]) -> Result<usize> {
        let mut current = objective.eval(&state.poses, true)?;
        state.history = vec![current.value];
        let mut accepted = 0;
        for _ in 0..self.config.steps_per_stage {
            if !current.value.is_finite() || current.gradient.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "objective {} with a non-finite gradient on shape {}",
                    current.value, self.shape.shape_id
                )));
            }
            let mut alpha = state.step;
            let mut next = None;
            for halvings in 0..=self.config.max_halvings {
                let candidate = step_poses(&state.poses, &current.gradient, &self.rotation_scale, active, alpha)?;
                let e = objective.eval(&candidate, false)?;
                if e.value < current.value {
                    next = Some((candidate, halvings));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((poses, halvings)) = next else { break };
            state.poses = poses;
            accepted += 1;
            let previous = std::mem::replace(&mut current, objective.eval(&state.poses, true)?);
            state.history.push(current.value);
            let growth = if halvings == 0 { 2.0 * alpha } else { alpha };
            let trial = self.spectral_step(&previous.gradient, &current.gradient, active, alpha).unwrap_or(growth);
            state.step = trial.min(MAX_STEP_GROWTH * self.config.step_size);
        }
        Ok(accepted)
    }
}

/// One gradient step on the active parts, expressed as a pose delta and
/// applied through [`compose_pose`]. The quaternion components of part `i`
/// move `rotation_scale[i]` times further than the translation.
fn step_poses(
    poses: &[Pose],
    gradient: &[[f64; 7]],
    rotation_scale: &[f64],
    active: &[bool],
    alpha: f64,
) -> Result<Vec<Pose>> {
    poses
        .iter()
        .zip(gradient)
        .zip(rotation_scale.iter().zip(active))
        .map(|((p, g), (&rs, &on))| {
            if !on {
                return Ok(*p);
            }
            let q = p.rotation;
            let a = alpha * rs;
            let target = Pose::new(
                Quat::new(q.w - a * g[0], q.x - a * g[1], q.y - a * g[2], q.z - a * g[3]),
                [
                    p.translation[0] - alpha * g[4],
                    p.translation[1] - alpha * g[5],
                    p.translation[2] - alpha * g[6],
                ],
            )?;
            compose_pose(&PoseDelta::between(p, &target), p)
        })
        .collect()
}

/// `1 / (4 ρ²)` with `ρ` the RMS distance of the part's points from its
/// centroid: a quaternion step of size `ε` moves points by about `2 ρ ε`, so
/// this puts rotation and translation on the same footing.
fn rotation_scales(parts: &[PointCloud]) -> Vec<f64> {
    parts
        .iter()
        .map(|p| {
            let c = p.centroid();
            let rho2 = p.points().iter().map(|x| dist2(*x, c)).sum::<f64>() / p.len() as f64;
            1.0 / (4.0 * rho2.max(MIN_RADIUS * MIN_RADIUS))
        })
        .collect()
}

/// Solves one shape.
pub fn solve(shape: &ShapeInstance, config: &SolverConfig) -> std::result::Result<SolveTrace, SolveError> {
    Solver::new(shape, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_plank_pair, generate_shape, Category, GenSpec};
    use crate::geom::add;

    fn plank() -> ShapeInstance {
        generate_plank_pair([0.6, 0.4, 0.2], 64, 2).unwrap()
    }

    #[test]
    fn coincident_parts_pay_full_penalty() {
        let s = plank();
        let poses = vec![Pose::IDENTITY; 2];
        let d = s.parts[0].inner_radius() + s.parts[1].inner_radius();
        let (v, g) = anti_collapse_penalty(&poses, &s.parts, 3.0).unwrap();
        assert!((v - 3.0 * d * d).abs() < 1e-12);
        assert!(g[0][4] > 0.0 && g[1][4] < 0.0, "descent pushes part 0 to -x");
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let s = plank();
        let poses = vec![
            Pose::new(Quat::from_axis_angle([0.0, 1.0, 0.0], 0.3), [0.02, 0.01, 0.0]).unwrap(),
            Pose::new(Quat::from_axis_angle([1.0, 0.0, 0.0], -0.2), [-0.03, 0.0, 0.05]).unwrap(),
        ];
        let (_, g) = anti_collapse_penalty(&poses, &s.parts, 2.0).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            for k in 0..7 {
                let f = |delta: f64| {
                    let mut p = poses.clone();
                    let mut params = p[i].params();
                    params[k] += delta;
                    p[i] = Pose::from_params(&params).unwrap();
                    anti_collapse_penalty(&p, &s.parts, 2.0).unwrap().0
                };
                let numeric = (f(h) - f(-h)) / (2.0 * h);
                assert!((numeric - g[i][k]).abs() < 1e-6, "part {i} param {k}: {numeric} vs {}", g[i][k]);
            }
        }
    }

    #[test]
    fn separated_parts_pay_nothing() {
        let s = plank();
        let poses = vec![Pose::IDENTITY, Pose::new(Quat::IDENTITY, [1.0, 0.0, 0.0]).unwrap()];
        assert_eq!(anti_collapse_penalty(&poses, &s.parts, 1.0).unwrap().0, 0.0);
    }

    #[test]
    fn perturbation_has_exact_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = perturb_pose(&Pose::IDENTITY, &mut rng, 0.2, 0.05).unwrap();
        assert!((p.rotation.angle() - 0.2).abs() < 1e-12);
        assert!((norm(p.translation) - 0.05).abs() < 1e-12);
        assert_eq!(perturb_pose(&Pose::IDENTITY, &mut rng, 0.0, 0.0).unwrap(), Pose::IDENTITY);
    }

    #[test]
    fn trace_has_one_record_per_stage_and_objective_never_rises() {
        let s = generate_shape(&GenSpec::new(Category::Chair, 150), "c", 8).unwrap();
        let cfg = SolverConfig {
            steps_per_stage: 10,
            ..SolverConfig::default()
        };
        let trace = solve(&s, &cfg).unwrap();
        assert_eq!(trace.records.len(), cfg.schedule.len() + 1);
        let last = trace.final_record().unwrap();
        assert_eq!(last.metrics, evaluate_shape(&last.poses, &s, &cfg.thresholds).unwrap());
        assert!(last.objective < trace.records[0].objective);
    }

    #[test]
    fn joint_stage_fixes_a_wrong_pairing() {
        let s = generate_shape(&GenSpec::new(Category::Table, 150), "t", 1).unwrap();
        let cfg = SolverConfig::default();
        let solver = Solver::new(&s, &cfg).unwrap();
        let mut state = solver.init_state().unwrap();
        state.poses = s.gt_poses.clone();
        let mut pairs = s.gt_pairing.pairs().to_vec();
        let (h0, h1) = (pairs[0].1, pairs[1].1);
        pairs[0].1 = h1;
        pairs[1].1 = h0;
        state.pairing = JointPairing::from_pairs(pairs);
        solver.joint_stage(&mut state).unwrap();
        assert_eq!(state.pairing, s.gt_pairing);
        for (p, g) in state.poses.iter().zip(&s.gt_poses) {
            assert!(dist2(p.translation, g.translation).sqrt() < 1e-6);
        }
    }

    #[test]
    fn coarse_term_drops_over_a_joint_stage() {
        let s = plank();
        let cfg = SolverConfig {
            mode: Mode::JointDriven,
            ..SolverConfig::default()
        };
        let solver = Solver::new(&s, &cfg).unwrap();
        let mut state = solver.init_state().unwrap();
        state.poses = s.gt_poses.clone();
        state.poses[1] = Pose::new(state.poses[1].rotation, add(state.poses[1].translation, [0.0, 0.0, -0.05])).unwrap();
        let before = solver.record("x", &state, 0).unwrap().losses.coarse;
        solver.joint_stage(&mut state).unwrap();
        let after = solver.record("x", &state, 0).unwrap().losses.coarse;
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn overflowing_objective_reports_divergence_with_trace() {
        let mut s = plank();
        let far: Vec<Vec3> = s.parts[0].points().iter().map(|p| [p[0] * 1e200, p[1], p[2]]).collect();
        s.parts[0] = PointCloud::new(far).unwrap();
        let cfg = SolverConfig {
            mode: Mode::JointDriven,
            ..SolverConfig::default()
        };
        match solve(&s, &cfg) {
            Err(SolveError::Diverged { trace, .. }) => assert!(trace.records.is_empty()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [Mode::SupervisedFit, Mode::JointDriven] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
    }
}
