use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::args::{Cli, Command, EvalArgs, GenArgs, GradcheckArgs, JointsArgs, ReportArgs, SolveArgs};
use super::CliError;
use crate::dataset::{generate_dataset, generate_plank_pair, shape_seed, AnnotateParams, Category, ShapeInstance};
use crate::eval::{evaluate_dataset, MetricReport, Prediction, Thresholds};
use crate::losses::{gradient_check, GradCheckConfig, Term};
use crate::solver::{solve, Mode, SolveError, SolverConfig, Stage};
use crate::{Error, Result};

const PRED_SUFFIX: &str = ".pred.json";
const TRACE_SUFFIX: &str = ".trace.json";
const REPORT_JSON: &str = "report.json";
const REPORT_CSV: &str = "report.csv";

pub(super) fn dispatch(cli: &Cli) -> std::result::Result<(), CliError> {
    match &cli.command {
        Command::Gen(a) => gen(a, cli.seed),
        Command::Joints(a) => joints(a),
        Command::Solve(a) => solve_cmd(a, cli.seed),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a, cli.seed),
        Command::Report(a) => report(a),
    }
}

/// 64-bit FNV-1a hash, used to derive per-shape seeds from shape ids.
pub fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// The manifest itself, or every manifest in a directory sorted by name.
/// Prediction, trace and report files are skipped.
pub fn shape_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(path, e)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json")
                && !name.ends_with(PRED_SUFFIX)
                && !name.ends_with(TRACE_SUFFIX)
                && name != REPORT_JSON
        })
        .collect();
    files.sort();
    Ok(files)
}

fn load_shapes(path: &Path) -> Result<Vec<ShapeInstance>> {
    shape_files(path)?.par_iter().map(|p| ShapeInstance::load(p)).collect()
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)))
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn gen(a: &GenArgs, seed: u64) -> std::result::Result<(), CliError> {
    let categories = a
        .categories
        .iter()
        .map(|c| c.parse::<Category>())
        .collect::<Result<Vec<_>>>()
        .map_err(usage)?;
    ensure_dir(&a.out)?;
    let shapes = generate_dataset(&categories, a.count, seed, a.points)?;
    for s in &shapes {
        s.save(&a.out.join(format!("{}.json", s.shape_id)))?;
    }
    log::info!("wrote {} shapes to {}", shapes.len(), a.out.display());
    Ok(())
}

fn joints(a: &JointsArgs) -> std::result::Result<(), CliError> {
    require(&a.input)?;
    ensure_dir(&a.out)?;
    let params = AnnotateParams {
        joint_points: a.k,
        tau: a.tau,
        congruence_eps: a.eps,
    };
    let annotated = load_shapes(&a.input)?
        .into_par_iter()
        .map(|s| ShapeInstance::annotate(s.shape_id, s.category, s.parts, s.gt_poses, &params))
        .collect::<Result<Vec<_>>>()?;
    for s in &annotated {
        log::info!("{}: {} joint pairs", s.shape_id, s.joint_pair_count());
        s.save(&a.out.join(format!("{}.json", s.shape_id)))?;
    }
    Ok(())
}

fn solve_cmd(a: &SolveArgs, seed: u64) -> std::result::Result<(), CliError> {
    let mode: Mode = a.mode.parse().map_err(usage)?;
    let schedule = a
        .schedule
        .iter()
        .map(|s| match s.as_str() {
            "part" => Ok(Stage::Part),
            "joint" => Ok(Stage::Joint),
            other => Err(usage(format!("unknown stage {other:?}"))),
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if schedule.is_empty() {
        return Err(usage("schedule is empty"));
    }
    let base = SolverConfig {
        schedule,
        steps_per_stage: a.steps,
        step_size: a.step_size,
        temperature: a.temperature,
        anti_collapse_weight: a.anti_collapse,
        mode,
        perturb_rotation_deg: a.perturb_rot,
        perturb_translation: a.perturb_trans,
        ..SolverConfig::default()
    };
    base.validate().map_err(usage)?;
    require(&a.input)?;
    ensure_dir(&a.out)?;
    let shapes = load_shapes(&a.input)?;

    let results: Vec<_> = shapes
        .par_iter()
        .map(|s| {
            let config = SolverConfig {
                seed: shape_seed(seed, fnv1a(&s.shape_id)),
                ..base.clone()
            };
            (s, solve(s, &config))
        })
        .collect();

    let mut first_error = None;
    for (shape, result) in results {
        let trace_path = a.out.join(format!("{}{TRACE_SUFFIX}", shape.shape_id));
        match result {
            Ok(trace) => {
                let poses = trace.final_poses().unwrap_or_default().to_vec();
                let pred = Prediction {
                    shape_id: shape.shape_id.clone(),
                    poses,
                };
                let json = serde_json::to_string_pretty(&pred).expect("prediction serializes");
                write(&a.out.join(format!("{}{PRED_SUFFIX}", shape.shape_id)), &json)?;
                write(&trace_path, &trace.to_json())?;
            }
            Err(SolveError::Diverged { source, trace }) => {
                log::error!("{}: {source}", shape.shape_id);
                write(&trace_path, &trace.to_json())?;
                first_error.get_or_insert(CliError::Numeric(format!("{}: {source}", shape.shape_id)));
            }
            Err(SolveError::Invalid(e)) => {
                log::error!("{}: {e}", shape.shape_id);
                first_error.get_or_insert(CliError::from(e));
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

fn load_predictions(path: &Path) -> Result<BTreeMap<String, Vec<crate::geom::Pose>>> {
    let files: Vec<PathBuf> = if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        let mut f: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_str().is_some_and(|s| s.ends_with(PRED_SUFFIX)))
            .collect();
        f.sort();
        f
    };
    let mut out = BTreeMap::new();
    for p in files {
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let pred: Prediction = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: p.clone(),
            message: e.to_string(),
        })?;
        if out.insert(pred.shape_id.clone(), pred.poses).is_some() {
            log::warn!("duplicate prediction for {} in {}", pred.shape_id, p.display());
        }
    }
    Ok(out)
}

fn eval(a: &EvalArgs) -> std::result::Result<(), CliError> {
    require(&a.pred)?;
    require(&a.gt)?;
    ensure_dir(&a.out)?;
    let thresholds = Thresholds {
        part: a.part_threshold,
        joint: a.joint_threshold,
    };
    let predictions = load_predictions(&a.pred)?;
    let shapes = load_shapes(&a.gt)?;
    let report = evaluate_dataset(&predictions, &shapes, &thresholds)?;
    for id in &report.missing {
        log::warn!("no prediction for {id}");
    }
    for id in &report.unmatched {
        log::warn!("prediction {id} matches no shape");
    }
    write(&a.out.join(REPORT_CSV), &report.to_csv())?;
    write(&a.out.join(REPORT_JSON), &report.to_json())?;
    print!("{}", report.to_csv());
    Ok(())
}

fn gradcheck(a: &GradcheckArgs, seed: u64) -> std::result::Result<(), CliError> {
    let shape = match &a.input {
        Some(p) => ShapeInstance::load(p)?,
        None => generate_plank_pair([0.6, 0.4, 0.2], 64, seed)?,
    };
    let config = GradCheckConfig {
        trials: a.trials,
        tol: a.tol,
        seed,
        ..GradCheckConfig::default()
    };
    let reports = Term::ALL
        .par_iter()
        .map(|&t| gradient_check(t, &shape, &config))
        .collect::<Result<Vec<_>>>()?;
    let mut failed = Vec::new();
    for r in &reports {
        println!(
            "{:<12} max_rel_error={:.3e} evaluated={} skipped={} {}",
            r.term,
            r.max_rel_error,
            r.evaluated,
            r.skipped,
            if r.passed { "PASS" } else { "FAIL" }
        );
        if !r.passed {
            failed.push(r.term.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn report(a: &ReportArgs) -> std::result::Result<(), CliError> {
    let text = fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let report: MetricReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: a.input.clone(),
        message: e.to_string(),
    })?;
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    println!("| category | Shape CD | Part Acc | Joint CD | Joint Acc | shapes |");
    println!("|---|---|---|---|---|---|");
    for r in &report.rows {
        println!(
            "| {} | {:.4} | {:.1} | {} | {} | {} |",
            r.category,
            r.shape_cd,
            r.part_acc,
            opt(r.joint_cd),
            r.joint_acc.map_or_else(|| "-".to_string(), |x| format!("{x:.1}")),
            r.n_shapes
        );
    }
    if !report.missing.is_empty() {
        println!("\nmissing predictions: {}", report.missing.join(", "));
    }
    if !report.unmatched.is_empty() {
        println!("unmatched predictions: {}", report.unmatched.join(", "));
    }
    Ok(())
}
