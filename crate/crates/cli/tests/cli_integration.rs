//! End-to-end runs of the `handflow` binary: a generate, inspect,
//! evaluate, fit pipeline over a real (tiny) dataset, plus the exit
//! code and stderr contract for each failure category.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use handflow_cli::formats::{annotation_path, read_annotation};

fn handflow<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_handflow"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is utf-8")
}

/// Value of a `key value` stdout line.
fn field(stdout: &str, key: &str) -> String {
    for line in stdout.lines() {
        if let Some(rest) = line.strip_prefix(key) {
            if let Some(value) = rest.strip_prefix(' ') {
                return value.to_string();
            }
        }
    }
    panic!("no `{key}` line in:\n{stdout}");
}

fn generate(run_dir: &Path) -> String {
    let out = handflow([
        "gen",
        run_dir.to_str().unwrap(),
        "--seqs",
        "3",
        "--synth-db",
        "60",
        "--seed",
        "7",
        "--frames",
        "4",
        "--width",
        "64",
        "--height",
        "64",
        "--workers",
        "1",
    ]);
    assert!(
        out.status.success(),
        "gen failed: {}",
        stderr_of(&out)
    );
    stdout_of(&out)
}

#[test]
fn pipeline_generates_inspects_evaluates_and_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");

    let stdout = generate(&run_dir);
    assert_eq!(field(&stdout, "sequences"), "3");
    assert_eq!(field(&stdout, "frames_per_sequence"), "4");
    let fp = field(&stdout, "db_fingerprint");
    assert_eq!(fp.len(), 64);
    assert!(fp.chars().all(|c| c.is_ascii_hexdigit()));
    assert!(run_dir.join("manifest.json").is_file());
    assert!(run_dir.join("seq_000002").join("frame_003.png").is_file());

    // The audit passes on fresh output.
    let out = handflow(["inspect", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stdout_of(&out));
    let stdout = stdout_of(&out);
    assert_eq!(field(&stdout, "sequences"), "3");
    assert_eq!(field(&stdout, "frames"), "12");
    let checks: Vec<&str> = stdout
        .lines()
        .filter(|l| l.starts_with("check "))
        .collect();
    assert!(checks.len() >= 8, "{stdout}");
    assert!(checks.iter().all(|l| l.contains(": ok")), "{stdout}");

    // Predictions copied from the annotation score perfectly against it.
    let seq0 = run_dir.join("seq_000000");
    let annot = read_annotation(&seq0).unwrap();
    let pred_path = tmp.path().join("pred.txt");
    let mut text = String::new();
    for (k, frame) in annot.flow.frames.iter().enumerate() {
        let coords: Vec<String> = frame
            .joints3d
            .flatten()
            .iter()
            .map(|v| v.to_string())
            .collect();
        text.push_str(&format!("{k} {}\n", coords.join(" ")));
    }
    fs::write(&pred_path, text).unwrap();

    let csv_path = tmp.path().join("curve.csv");
    let out = handflow([
        "eval",
        pred_path.to_str().unwrap(),
        annotation_path(&seq0).to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let stdout = stdout_of(&out);
    assert_eq!(field(&stdout, "frames"), "4");
    assert_eq!(field(&stdout, "mean_error_mm"), "0");
    assert_eq!(field(&stdout, "auc"), "1");
    assert_eq!(field(&stdout, "pck@20mm"), "1");
    assert_eq!(field(&stdout, "pck@50mm"), "1");
    let csv = fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 32);
    assert_eq!(csv.lines().next(), Some("threshold_mm,fraction"));

    // The same joints refit under the default shape with negligible
    // residual because the synthetic database was built from it.
    let params_path = tmp.path().join("params.txt");
    let out = handflow([
        "ik",
        pred_path.to_str().unwrap(),
        "--output",
        params_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let stdout = stdout_of(&out);
    assert_eq!(field(&stdout, "frames"), "4");
    let max_residual: f64 = field(&stdout, "max_residual_mm").parse().unwrap();
    assert!(max_residual < 1e-6, "{max_residual}");
    let params = fs::read_to_string(&params_path).unwrap();
    assert_eq!(params.lines().count(), 4);
    assert!(params.lines().all(|l| l.split_whitespace().count() == 47));

    // A partial audit visits only the requested prefix.
    let out = handflow(["inspect", run_dir.to_str().unwrap(), "--max-seqs", "1"]);
    assert!(out.status.success());
    assert_eq!(field(&stdout_of(&out), "sequences"), "1");
}

#[test]
fn failures_map_to_categorized_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();

    // Rejected options: config, exit 2.
    let out = handflow([
        "gen",
        tmp.path().join("a").to_str().unwrap(),
        "--seqs",
        "0",
        "--synth-db",
        "60",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).starts_with("error[config]:"), "{}", stderr_of(&out));

    // Occupied output directory: config, exit 2.
    let occupied = tmp.path().join("occupied");
    fs::create_dir(&occupied).unwrap();
    fs::write(occupied.join("keep.txt"), "x").unwrap();
    let out = handflow([
        "gen",
        occupied.to_str().unwrap(),
        "--seqs",
        "1",
        "--synth-db",
        "60",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).starts_with("error[config]:"));

    // Unreadable input: io, exit 3.
    let out = handflow([
        "eval",
        tmp.path().join("missing.txt").to_str().unwrap(),
        tmp.path().join("missing2.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).starts_with("error[io]:"));

    // Inverted threshold grid: config, exit 2.
    let pred = tmp.path().join("p.txt");
    fs::write(&pred, "0 ".to_string() + &vec!["0"; 63].join(" ")).unwrap();
    let out = handflow([
        "eval",
        pred.to_str().unwrap(),
        pred.to_str().unwrap(),
        "--t-min",
        "50",
        "--t-max",
        "20",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).starts_with("error[config]:"));

    // Malformed shape list is caught at argument parsing.
    let out = handflow(["ik", pred.to_str().unwrap(), "--beta", "1,2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("expected 10"));

    // No manifest to audit: io, exit 3.
    let out = handflow(["inspect", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).starts_with("error[io]:"));
}

#[test]
fn inspect_flags_tampering_with_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    generate(&run_dir);

    fs::remove_file(run_dir.join("seq_000001").join("frame_002_mask.png")).unwrap();
    let out = handflow(["inspect", run_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let stdout = stdout_of(&out);
    assert!(stdout.contains("check frame_files_complete: FAIL"), "{stdout}");
}
