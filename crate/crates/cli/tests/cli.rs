//! End-to-end checks of the binary: artifact layout, stage isolation,
//! seed plumbing, and the error contract (one JSON line on stderr plus
//! a class-specific exit code).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ghostgrid")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Runs the binary with the fixture config and the given outdir.
fn run(outdir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .arg("--config")
        .arg(fixture("run.toml"))
        .arg("--outdir")
        .arg(outdir)
        .args(args)
        .output()
        .expect("failed to spawn ghostgrid")
}

fn run_ok(outdir: &Path, args: &[&str]) {
    let out = run(outdir, args);
    assert!(
        out.status.success(),
        "ghostgrid {args:?} failed\nstdout: {}stderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn gen(outdir: &Path) {
    let world = fixture("world100.toml");
    run_ok(outdir, &["gen", world.to_str().unwrap()]);
}

/// Every file under the directory, keyed by its relative path.
fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn assert_same_artifacts(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) {
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>(),
        "artifact sets differ"
    );
    for (name, bytes) in a {
        assert!(bytes == &b[name], "artifact {name} differs");
    }
}

#[test]
fn stages_run_in_isolation_match_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let joint = tmp.path().join("joint");
    let split = tmp.path().join("split");
    gen(&joint);
    gen(&split);
    run_ok(&joint, &["pipeline"]);
    for stage in ["locus", "vacancy", "classify", "series", "crosstab", "migrate", "render"] {
        run_ok(&split, &[stage]);
    }
    run_ok(&joint, &["score"]);
    run_ok(&split, &["score"]);
    assert_same_artifacts(&artifacts(&joint), &artifacts(&split));
}

#[test]
fn rerunning_the_pipeline_is_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path());
    run_ok(tmp.path(), &["pipeline"]);
    let first = artifacts(tmp.path());
    run_ok(tmp.path(), &["pipeline"]);
    assert_same_artifacts(&first, &artifacts(tmp.path()));
}

#[test]
fn fixture_pipeline_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path());
    run_ok(tmp.path(), &["pipeline"]);
    run_ok(tmp.path(), &["score"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("score/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["verdict_precision"]["vacant"], 1.0);
    assert_eq!(report["verdict_recall"]["vacant"], 1.0);
    assert_eq!(report["tourism_recall"], 1.0);
    assert_eq!(report["edge_f1"], 1.0);
    assert_eq!(report["crosstab_l1"], 0.0);
}

#[test]
fn gen_seed_flag_overrides_the_world_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let world = fixture("world100.toml");
    let world = world.to_str().unwrap();
    run_ok(&a, &["gen", world, "--seed", "7"]);
    run_ok(&b, &["gen", world, "--seed", "7"]);
    run_ok(&c, &["gen", world, "--seed", "8"]);
    let pa = fs::read(a.join("gen/points.csv")).unwrap();
    let pb = fs::read(b.join("gen/points.csv")).unwrap();
    let pc = fs::read(c.join("gen/points.csv")).unwrap();
    assert_eq!(pa, pb, "same seed must reproduce the same world");
    assert_ne!(pa, pc, "different seeds must change the world");
}

/// The stderr contract: exactly one line, valid JSON, with the error class.
fn assert_error_line(out: &Output, code: i32, classes: &[&str]) {
    assert_eq!(out.status.code(), Some(code), "unexpected exit code");
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.trim_end().lines().collect();
    assert_eq!(lines.len(), 1, "expected one stderr line, got: {stderr}");
    let v: serde_json::Value = serde_json::from_str(lines[0]).expect("stderr line is JSON");
    let class = v["error"].as_str().unwrap();
    assert!(classes.contains(&class), "unexpected error class {class}");
    assert!(!v["message"].as_str().unwrap().is_empty());
}

#[test]
fn missing_input_exits_two_with_a_json_error_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["locus"]);
    assert_error_line(&out, 2, &["io"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("points.csv"), "message should name the file: {stderr}");
}

#[test]
fn bad_parameters_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path());

    let out = run(tmp.path(), &["--set", "vacancy.lower_threshold=400", "locus"]);
    assert_error_line(&out, 1, &["parameter", "validation"]);

    let out = run(tmp.path(), &["--set", "crosstab.focal=\"\"", "crosstab"]);
    assert_error_line(&out, 1, &["parameter"]);

    let out = run(tmp.path(), &["--set", "outdirr=\"x\"", "locus"]);
    assert_error_line(&out, 1, &["validation"]);

    let out = run(tmp.path(), &["--workers", "0", "locus"]);
    assert_error_line(&out, 1, &["parameter"]);
}

#[test]
fn score_reflects_corrupted_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path());
    run_ok(tmp.path(), &["pipeline"]);

    // Drop one of the three migration edges; recall must fall to 2/3.
    let edges_path = tmp.path().join("migrate/edges.csv");
    let edges = fs::read_to_string(&edges_path).unwrap();
    let kept: Vec<&str> = edges.lines().take(2).collect();
    fs::write(&edges_path, kept.join("\n") + "\n").unwrap();

    run_ok(tmp.path(), &["score"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("score/report.json")).unwrap())
            .unwrap();
    let recall = report["edge_recall"].as_f64().unwrap();
    assert!((recall - 2.0 / 3.0).abs() < 1e-12, "edge recall {recall}");
    assert_eq!(report["edge_precision"], 1.0);
}
