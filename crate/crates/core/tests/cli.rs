use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmsurrogate"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn stage_chain_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sys = ["--system", "example2", "--T", "100"];
    ok(d, &[&["simulate"][..], &sys, &["--out", "data.csv"]].concat());
    assert!(d.join("data.provenance.json").exists());
    ok(d, &[&["greedy", "--dataset", "data.csv", "--out", "sel.json"][..], &sys].concat());
    ok(d, &["fit", "--dataset", "data.csv", "--selection", "sel.json", "--out", "model.json"]);
    ok(
        d,
        &["eval", "--system", "example2", "--model", "model.json", "--grid", "-0.1:0.1:21", "--out", "eval.csv"],
    );
    let csv = fs::read_to_string(d.join("eval.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "x1,s_1,h_taylor_1,residual_norm");
    assert_eq!(lines.count(), 21);
    assert!(d.join("eval.taylor.json").exists());
    assert!(!d.join(".cmsurrogate.lock").exists());
}

#[test]
fn empty_box_gives_header_only_dataset_then_empty_dataset_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--system", "example2", "--T", "10", "--box", "0.5:0.4", "--out", "data.csv"]);
    assert_eq!(fs::read_to_string(d.join("data.csv")).unwrap(), "t,x1,y1\n");
    let out = run(d, &["greedy", "--dataset", "data.csv"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn abort_policy_exits_with_step_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--system", "example1", "--T", "5", "--on-step-failure", "abort"]);
    assert_eq!(code(&out), 3);
    assert!(!dir.path().join("dataset.csv").exists());
}

#[test]
fn model_of_another_system_is_a_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--system", "example2", "--T", "50"]);
    ok(d, &["greedy", "--system", "example2", "--dataset", "dataset.csv"]);
    ok(d, &["fit", "--dataset", "dataset.csv", "--selection", "selection.json"]);
    let out = run(d, &["eval", "--system", "example3", "--model", "model.json"]);
    assert_eq!(code(&out), 7);
}

#[test]
fn stale_selection_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--system", "example2", "--T", "50"]);
    ok(d, &["greedy", "--system", "example2", "--dataset", "dataset.csv"]);
    ok(d, &["simulate", "--system", "example2", "--T", "60"]);
    let out = run(d, &["fit", "--dataset", "dataset.csv", "--selection", "selection.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rerun greedy"));
    assert!(!d.join("model.json").exists());
}

#[test]
fn held_lock_blocks_a_second_writer() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".cmsurrogate.lock"), "").unwrap();
    let out = run(dir.path(), &["simulate", "--system", "example2", "--T", "1"]);
    assert_ne!(code(&out), 0);
    assert!(!dir.path().join("dataset.csv").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["simulate", "--tol-mode", "q"])), 2);
    assert_eq!(code(&run(dir.path(), &["reproduce", "2", "k3"])), 2);
}

#[test]
fn reproduce_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = ok(d, &["reproduce", "2", "k2", "--outdir", "a"]);
    ok(d, &["reproduce", "2", "k2", "--outdir", "b"]);
    for name in ["dataset.csv", "selection.json", "model.json", "eval.csv", "report.json"] {
        let (x, y) = (fs::read(d.join("a").join(name)).unwrap(), fs::read(d.join("b").join(name)).unwrap());
        assert!(x == y, "{name} differs");
    }
    assert!(a.contains("eval:"));
}
