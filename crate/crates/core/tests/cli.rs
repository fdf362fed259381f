use std::path::{Path, PathBuf};
use std::process::Command;

use asmforge::cli::{run, shape_files, CliError};
use asmforge::dataset::ShapeInstance;
use asmforge::eval::{MetricReport, Prediction};
use asmforge::solver::SolveTrace;

fn cli(args: &[&str]) -> Result<(), CliError> {
    run(std::iter::once("asmforge").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn exe(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_asmforge")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn gen(dir: &Path, count: &str) -> PathBuf {
    let data = dir.join("data");
    cli(&["--seed", "3", "gen", "--count", count, "--points", "100", "--out", s(&data)]).unwrap();
    data
}

fn read_pred(path: &Path) -> Prediction {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn zero_count_writes_an_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "0");
    assert_eq!(std::fs::read_dir(data).unwrap().count(), 0);
}

#[test]
fn generated_files_load_and_regenerate_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "4");
    let files = shape_files(&data).unwrap();
    assert_eq!(files.len(), 4);
    let other = tempfile::tempdir().unwrap();
    let again = gen(other.path(), "4");
    for f in files {
        let shape = ShapeInstance::load(&f).unwrap();
        shape.validate().unwrap();
        assert_eq!(f.file_name().unwrap().to_str().unwrap(), format!("{}.json", shape.shape_id));
        let twin = again.join(f.file_name().unwrap());
        assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(twin).unwrap());
    }
}

#[test]
fn unperturbed_supervised_solve_returns_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "3");
    let out = dir.path().join("pred");
    cli(&["solve", "--input", s(&data), "--out", s(&out), "--perturb-rot", "0", "--perturb-trans", "0"]).unwrap();
    for f in shape_files(&data).unwrap() {
        let shape = ShapeInstance::load(&f).unwrap();
        let pred = read_pred(&out.join(format!("{}.pred.json", shape.shape_id)));
        for (p, g) in pred.poses.iter().zip(&shape.gt_poses) {
            for (a, b) in p.params().iter().zip(g.params()) {
                assert!((a - b).abs() <= 1e-12, "{}: {a} vs {b}", shape.shape_id);
            }
        }
        let trace: SolveTrace =
            serde_json::from_str(&std::fs::read_to_string(out.join(format!("{}.trace.json", shape.shape_id))).unwrap())
                .unwrap();
        let stages: Vec<&str> = trace.records.iter().map(|r| r.stage.as_str()).collect();
        assert_eq!(stages, ["init", "part", "joint", "part", "joint", "joint"]);
    }
}

#[test]
fn worker_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "3");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli(&["--jobs", "1", "solve", "--input", s(&data), "--out", s(&a), "--steps", "5"]).unwrap();
    cli(&["solve", "--input", s(&data), "--out", s(&b), "--steps", "5"]).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap());
    }
}

#[test]
fn ground_truth_scores_perfectly_and_mismatches_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "3");
    let pred = dir.path().join("pred");
    std::fs::create_dir(&pred).unwrap();
    let files = shape_files(&data).unwrap();
    for f in &files[1..] {
        let shape = ShapeInstance::load(f).unwrap();
        let p = Prediction {
            shape_id: shape.shape_id.clone(),
            poses: shape.gt_poses.clone(),
        };
        std::fs::write(pred.join(format!("{}.pred.json", shape.shape_id)), serde_json::to_string(&p).unwrap()).unwrap();
    }
    let stray = Prediction {
        shape_id: "ghost".into(),
        poses: vec![],
    };
    std::fs::write(pred.join("ghost.pred.json"), serde_json::to_string(&stray).unwrap()).unwrap();

    let out = dir.path().join("report");
    cli(&["eval", "--pred", s(&pred), "--gt", s(&data), "--out", s(&out)]).unwrap();
    let report: MetricReport = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let first = ShapeInstance::load(&files[0]).unwrap();
    assert_eq!(report.missing, vec![first.shape_id]);
    assert_eq!(report.unmatched, vec!["ghost".to_string()]);
    let avg = report.rows.last().unwrap();
    assert_eq!((avg.category.as_str(), avg.n_shapes), ("average", 2));
    assert_eq!((avg.part_acc, avg.shape_cd, avg.joint_acc), (100.0, 0.0, Some(100.0)));
    assert!(avg.joint_cd.unwrap() <= 1e-4);
    assert!(std::fs::read_to_string(out.join("report.csv")).unwrap().starts_with("category,shape_cd"));
    cli(&["report", "--input", s(&out.join("report.json"))]).unwrap();
}

#[test]
fn corrupted_prediction_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "1");
    let pred = dir.path().join("pred");
    std::fs::create_dir(&pred).unwrap();
    std::fs::write(pred.join("chair_0000.pred.json"), "{\"shape_id\": \"chair_0000\", \"poses\": [").unwrap();
    let out = dir.path().join("report");
    let (code, stderr) = exe(&["eval", "--pred", s(&pred), "--gt", s(&data), "--out", s(&out)]);
    assert_eq!(code, 2);
    assert!(stderr.contains("chair_0000.pred.json"), "{stderr}");
}

#[test]
fn missing_manifest_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "1");
    let f = &shape_files(&data).unwrap()[0];
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f).unwrap()).unwrap();
    doc["parts"][0].as_object_mut().unwrap().remove("gt_pose");
    std::fs::write(f, doc.to_string()).unwrap();
    let err = cli(&["solve", "--input", s(f), "--out", s(&dir.path().join("pred"))]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("gt_pose"), "{err}");
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "1");
    let out = dir.path().join("pred");
    assert_eq!(exe(&["solve", "--input", s(&data), "--out", s(&out), "--mode", "guess"]).0, 1);
    assert_eq!(exe(&["gen", "--out", s(&out), "--categories", "sofa"]).0, 1);
    assert_eq!(exe(&["frobnicate"]).0, 1);
    assert_eq!(exe(&["--help"]).0, 0);
}

#[test]
fn gradient_check_exit_codes() {
    assert_eq!(exe(&["gradcheck", "--trials", "100", "--tol", "1e-4"]).0, 0);
    // Zero tolerance cannot be met by finite differences.
    assert_eq!(exe(&["gradcheck", "--trials", "5", "--tol", "0"]).0, 3);
}

#[test]
fn gradient_check_on_a_generated_chair() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "1");
    let f = &shape_files(&data).unwrap()[0];
    cli(&["gradcheck", "--trials", "5", "--input", s(f)]).unwrap();
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cli(&["solve", "--input", s(&dir.path().join("nope")), "--out", s(dir.path())]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
