use std::fs;
use std::path::Path;

use hiext::cli::{main_with, EXIT_BUDGET, EXIT_FAIL, EXIT_INPUT, EXIT_PASS};

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["hiext"];
    argv.extend_from_slice(args);
    let code = main_with(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn norm_of_the_primitive_pair() {
    let dir = tempfile::tempdir().unwrap();
    let v = write(dir.path(), "x.txt", "# four ones\n1:1/1 2:1/1 3:1/1 4:1/1\n");
    let (code, out) = run(&["norm", &v, "--set", "schedule=paperA"]);
    assert_eq!(code, EXIT_PASS, "{out}");
    assert!(out.contains("norm = 2/1 (2.000000)"), "{out}");
    assert!(out.contains("certificate = (w 0 (+ 1) (+ 2) (+ 3) (+ 4))"), "{out}");
}

#[test]
fn certificates_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let v = write(dir.path(), "x.txt", "1:1 2:1 3:1 4:1\n");
    let good = write(dir.path(), "good.txt", "(w 0 (+ 1) (+ 2) (+ 3) (+ 4))\nclaim = 2\n");
    let (code, out) = run(&["cert", &good, &v, "--set", "schedule=paperA"]);
    assert_eq!(code, EXIT_PASS, "{out}");

    let wrong_claim = write(dir.path(), "claim.txt", "(w 0 (+ 1) (+ 2) (+ 3) (+ 4))\nclaim = 3\n");
    assert_eq!(run(&["cert", &wrong_claim, &v, "--set", "schedule=paperA"]).0, EXIT_FAIL);

    // five children under a weight allowing four
    let tampered = write(dir.path(), "bad.txt", "(w 0 (+ 1) (+ 2) (+ 3) (+ 4) (+ 5))\n");
    let (code, out) = run(&["cert", &tampered, &v, "--set", "schedule=paperA"]);
    assert_eq!(code, EXIT_FAIL, "{out}");
    assert!(out.contains("invalid certificate"), "{out}");
}

#[test]
fn verify_lsa2_small() {
    let (code, out) = run(&["verify", "lsa2", "--n", "2", "--max", "20"]);
    assert_eq!(code, EXIT_PASS, "{out}");
    assert!(out.contains("subsets: 1024"), "{out}");
    assert!(out.ends_with("verdict PASS\n"), "{out}");
}

#[test]
fn exit_codes_for_bad_input_and_budgets() {
    assert_eq!(run(&["verify", "no-such-suite"]).0, EXIT_INPUT);
    assert_eq!(run(&["norm", "/nonexistent/vectors.txt"]).0, EXIT_INPUT);
    assert_eq!(run(&["verify", "lsa2", "--set", "depth=x"]).0, EXIT_INPUT);
    assert_eq!(run(&["frobnicate"]).0, EXIT_INPUT);
    let dir = tempfile::tempdir().unwrap();
    let v = write(dir.path(), "x.txt", "1:1 2:oops\n");
    assert_eq!(run(&["norm", &v]).0, EXIT_INPUT);
    // 2^15 subsets is over the exhaustive budget
    assert_eq!(run(&["verify", "lsa2", "--n", "1", "--max", "30"]).0, EXIT_BUDGET);
    let (code, out) = run(&["gen", "2", "--set", "budget=10"]);
    assert_eq!(code, EXIT_BUDGET, "{out}");
}

#[test]
fn stage_snapshots_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("snap");
    let snap = snap.to_string_lossy();
    let args = ["gen", "1", "--set", "support_bound=5"];
    let (code, out) = run(&[&args[..], &["--out", &snap]].concat());
    assert_eq!(code, EXIT_PASS, "{out}");
    let (code, out) = run(&[&args[..], &["--check", &snap]].concat());
    assert_eq!(code, EXIT_PASS, "{out}");
    assert!(out.contains("snapshot matches"), "{out}");
    let (code, out) = run(&["gen", "2", "--kind", "whi"]);
    assert_eq!(code, EXIT_PASS, "{out}");
    assert!(out.contains(", 0 invalid"), "{out}");
}

#[test]
fn argument_definitions_are_consistent() {
    use clap::CommandFactory;
    hiext::cli::Cli::command().debug_assert();
}
