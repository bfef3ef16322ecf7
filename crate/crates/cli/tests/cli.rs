use std::path::PathBuf;
use std::process::Command;

use clipverify::{run, RunReport, EXIT_FALSIFIED, EXIT_UNKNOWN, EXIT_USAGE, EXIT_VERIFIED};
use clipverify_core::fixtures;
use clipverify_core::geometry::BoxDomain;
use clipverify_core::linalg::Matrix;
use clipverify_core::network::{canonicalize, PropertySpec};
use clipverify_core::oracle::exact_verify;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
        .display()
        .to_string()
}

fn toy_args(extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = ["clipverify", "verify", "--model"]
        .map(String::from)
        .to_vec();
    v.push(data("toy.json"));
    v.push("--property".into());
    v.push(data("toy_prop.json"));
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn invoke(args: &[String]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(args.iter().cloned(), &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn report(text: &str) -> RunReport {
    serde_json::from_str(text.trim()).unwrap()
}

#[test]
fn toy_is_falsified_in_both_modes() {
    let problem = fixtures::toy_problem();
    for mode in ["input", "activation"] {
        let (code, out, _) = invoke(&toy_args(&[
            "--mode",
            mode,
            "--clip",
            "both",
            "--oracle-check",
        ]));
        assert_eq!(code, EXIT_FALSIFIED, "{out}");
        let r = report(&out);
        assert_eq!(r.status, "falsified");
        let x = r.counterexample.unwrap();
        let v = problem.margin(&x);
        assert!(v < 0.0 && problem.input_box.contains(&x, 0.0));
        assert_eq!(r.counterexample_value, Some(v));
        let oracle = r.oracle.unwrap();
        assert_eq!(
            (oracle.status.as_str(), oracle.agrees),
            ("falsified", Some(true))
        );
    }
}

#[test]
fn zero_timeout_is_unknown() {
    let (code, out, _) = invoke(&toy_args(&["--timeout", "0"]));
    assert_eq!(code, EXIT_UNKNOWN);
    let r = report(&out);
    assert_eq!(
        (r.status.as_str(), r.bound, r.domains_visited),
        ("unknown", None, 0)
    );
}

#[test]
fn verified_property_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let prop = dir.path().join("prop.json");
    let out_path = dir.path().join("report.json");
    // The toy output never drops below -4 on its box.
    let spec = PropertySpec::new(fixtures::toy_box(), Matrix::identity(1), vec![-4.0]).unwrap();
    let exact = exact_verify(
        &canonicalize(&fixtures::toy_model(), &spec).unwrap(),
        &fixtures::toy_box(),
        &[],
    )
    .unwrap();
    assert!(exact.holds());
    std::fs::write(&prop, spec.to_json_string()).unwrap();
    let args: Vec<String> = [
        "clipverify",
        "verify",
        "--model",
        &data("toy.json"),
        "--property",
        prop.to_str().unwrap(),
        "--mode",
        "activation",
        "--alpha",
        "adaptive",
        "--output",
        out_path.to_str().unwrap(),
    ]
    .map(String::from)
    .to_vec();
    let (code, out, _) = invoke(&args);
    assert_eq!(code, EXIT_VERIFIED);
    assert!(out.is_empty());
    let r = report(&std::fs::read_to_string(&out_path).unwrap());
    assert_eq!(r.status, "verified");
    assert!(r.bound.unwrap() >= 0.0);
    assert_eq!(r.config.alpha, "adaptive");
}

#[test]
fn flag_errors_exit_three() {
    for extra in [
        &["--batch", "0"][..],
        &["--passes", "0"],
        &["--timeout", "-1"],
        &["--alpha", "fixed:1.5"],
        &["--mode", "sideways"],
        &["--clip", "none", "--seq-clip"],
        &["--clip", "complete", "--reorder-constraints"],
        &["--unknown-flag"],
    ] {
        let (code, out, err) = invoke(&toy_args(extra));
        assert_eq!(code, EXIT_USAGE, "{extra:?}");
        assert!(out.is_empty() && !err.is_empty());
    }
    let (code, _, err) = invoke(
        &[
            "clipverify",
            "verify",
            "--model",
            "/nonexistent.json",
            "--property",
            "x",
        ]
        .map(String::from),
    );
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("nonexistent"));
}

#[test]
fn mismatched_dimensions_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let prop = dir.path().join("prop.json");
    let spec = PropertySpec::new(
        BoxDomain::new(vec![0.0; 3], vec![1.0; 3]).unwrap(),
        Matrix::identity(1),
        vec![0.0],
    )
    .unwrap();
    std::fs::write(&prop, spec.to_json_string()).unwrap();
    let args = [
        "clipverify",
        "verify",
        "--model",
        &data("toy.json"),
        "--property",
        prop.to_str().unwrap(),
    ]
    .map(String::from);
    assert_eq!(invoke(&args).0, EXIT_USAGE);
}

#[test]
fn report_round_trips_and_echoes_config() {
    let (_, out, _) = invoke(&toy_args(&[
        "--clip",
        "relaxed",
        "--reorder-constraints",
        "--topk",
        "3",
        "--seed",
        "9",
    ]));
    let r = report(&out);
    assert_eq!(serde_json::to_string(&r).unwrap(), out.trim());
    assert!(r.config.seq_clip && r.config.reorder_constraints);
    assert_eq!((r.config.topk, r.config.seed), (3, 9));
    assert!(out.starts_with("{\"status\":"));
}

#[test]
fn binary_runs() {
    let bin = env!("CARGO_BIN_EXE_clipverify");
    let out = Command::new(bin)
        .args(&toy_args(&["--mode", "activation"])[1..])
        .env("CLIPVERIFY_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_FALSIFIED));
    assert_eq!(
        report(&String::from_utf8(out.stdout).unwrap()).status,
        "falsified"
    );

    let bad = Command::new(bin)
        .args(&toy_args(&[])[1..])
        .env("CLIPVERIFY_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
}
