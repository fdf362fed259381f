use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::dataset::{DEFAULT_CONGRUENCE_EPS, DEFAULT_JOINT_POINTS, DEFAULT_JOINT_TAU};
use crate::eval::{DEFAULT_JOINT_THRESHOLD, DEFAULT_PART_THRESHOLD};

#[derive(Debug, Parser)]
#[command(name = "asmforge", version, about = "Joint-centric part assembly toolkit")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-shape work; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic furniture shapes as JSON manifests.
    Gen(GenArgs),
    /// Re-detect joints, signs and congruent classes on existing manifests.
    Joints(JointsArgs),
    /// Solve part poses for one manifest or a directory of them.
    Solve(SolveArgs),
    /// Score predictions against ground-truth manifests.
    Eval(EvalArgs),
    /// Check analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Print a metric report as a table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Categories, cycled in order.
    #[arg(long, value_delimiter = ',', default_value = "chair,table,cabinet")]
    pub categories: Vec<String>,
    #[arg(long, default_value_t = 32)]
    pub count: usize,
    #[arg(long, default_value_t = 300)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct JointsArgs {
    /// Manifest file or directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Points per joint.
    #[arg(long, default_value_t = DEFAULT_JOINT_POINTS)]
    pub k: usize,
    /// Contact distance.
    #[arg(long, default_value_t = DEFAULT_JOINT_TAU)]
    pub tau: f64,
    /// Chamfer tolerance for congruent parts.
    #[arg(long, default_value_t = DEFAULT_CONGRUENCE_EPS)]
    pub eps: f64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Manifest file or directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// supervised-fit or joint-driven.
    #[arg(long, default_value = "supervised-fit")]
    pub mode: String,
    #[arg(long, value_delimiter = ',', default_value = "part,joint,part,joint,joint")]
    pub schedule: Vec<String>,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub step_size: f64,
    #[arg(long, default_value_t = crate::graph::DEFAULT_TEMPERATURE)]
    pub temperature: f64,
    #[arg(long, default_value_t = 10.0)]
    pub anti_collapse: f64,
    /// Initial rotation error in degrees (supervised-fit).
    #[arg(long, default_value_t = 10.0)]
    pub perturb_rot: f64,
    /// Initial translation error (supervised-fit).
    #[arg(long, default_value_t = 0.05)]
    pub perturb_trans: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of `<id>.pred.json` files.
    #[arg(long)]
    pub pred: PathBuf,
    /// Manifest file or directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Directory for `report.csv` and `report.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PART_THRESHOLD)]
    pub part_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_JOINT_THRESHOLD)]
    pub joint_threshold: f64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Manifest to check on; a generated plank pair when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A `report.json` written by `eval`.
    #[arg(long)]
    pub input: PathBuf,
}
