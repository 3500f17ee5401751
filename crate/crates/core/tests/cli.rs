mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use common::problem_path;
use sosvec::Error;

fn sosvec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sosvec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn path(name: &str) -> String {
    problem_path(name).to_string_lossy().into_owned()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn help_succeeds() {
    let out = sosvec(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["bounds", "approx", "sample", "check", "minimize"] {
        assert!(text.contains(cmd), "{text}");
    }
}

#[test]
fn parse_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", "{\"n\": 2,\n \"objectives\": [\n  {\"p\": [[1.0, [1, 0]]}\n]}");
    let out = sosvec(&["bounds", &bad]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("bad.json") && err.contains("line 3"), "{err}");

    let wrong_dim = write(
        &dir,
        "dim.json",
        r#"{"n": 2, "objectives": [{"p": [[1.0, [1, 0, 0]]]}], "constraints": []}"#,
    );
    assert_eq!(code(&sosvec(&["bounds", &wrong_dim])), 2);

    let missing = dir.path().join("absent.json");
    assert_eq!(code(&sosvec(&["bounds", missing.to_str().unwrap()])), 2);

    // clap usage errors
    assert_eq!(code(&sosvec(&["approx", &path("example1.json"), "--k", "2", "--mode", "chordal"])), 2);
    assert_eq!(code(&sosvec(&["frobnicate"])), 2);
    assert_eq!(
        code(&sosvec(&["sample", &path("example1.json"), "--k", "1", "--delta", "-0.1"])),
        2
    );
}

#[test]
fn assumption_violation_exit_3() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "a2.json",
        r#"{"n": 2,
            "objectives": [{"p": [[1.0, [1, 0]]]}, {"p": [[1.0, [0, 1]]], "q": [[1.0, [1, 0]]]}],
            "constraints": [[[1.0, [0, 0]], [-1.0, [2, 0]], [-1.0, [0, 2]]]],
            "box": [[-1.0, 1.0], [-1.0, 1.0]]}"#,
    );
    let out = sosvec(&["bounds", &f]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("q2"), "{}", stderr(&out));

    let empty = write(
        &dir,
        "empty.json",
        r#"{"n": 1, "objectives": [{"p": [[1.0, [1]]]}],
            "constraints": [[[-1.0, [0]], [-1.0, [2]]]], "box": [[-1.0, 1.0]]}"#,
    );
    assert_eq!(code(&sosvec(&["bounds", &empty])), 3);
}

#[test]
fn solver_failure_exit_4() {
    let dir = TempDir::new().unwrap();
    let art = dir.path().join("psi.json");
    let out = sosvec(&["approx", &path("example1.json"), "--k", "1", "--out", art.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    // ψ ≡ 1 with δ = 0.5 leaves nothing feasible
    let mut v = json(&art);
    v["psi"] = serde_json::json!([[1.0, [0, 0]]]);
    let fake = write(&dir, "fake.json", &v.to_string());
    let target = write(&dir, "target.json", "[[1.0, [2, 0]]]");
    let out = sosvec(&[
        "minimize",
        &path("example1.json"),
        "--psi",
        &fake,
        "--delta",
        "0.5",
        "--objective",
        &target,
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn verification_exit_code() {
    assert_eq!(Error::Verification("x".into()).exit_code(), 5);
    assert_eq!(Error::RaiseOrder { order: 2 }.exit_code(), 4);
    assert_eq!(Error::Assumption("x".into()).exit_code(), 3);
    assert_eq!(Error::Parse("x".into()).exit_code(), 2);
}

#[test]
fn bounds_artifact() {
    let out = sosvec(&["bounds", &path("example1.json")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["f_lower", "f_upper", "objectives"]);
    assert!((v["f_lower"].as_f64().unwrap() + 1.0).abs() < 1e-6);
    let objs = v["objectives"].as_array().unwrap();
    assert_eq!(objs.len(), 3);
    assert!(objs[2]["lower"]["value"].as_f64().unwrap().abs() < 1e-6);
    assert!(objs[0]["lower"]["certificate"]["blocks"].as_array().unwrap().len() >= 2);
}

#[test]
fn pipeline_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |tag: &str| -> Vec<Vec<u8>> {
        let psi = dir.path().join(format!("psi_{tag}.json"));
        let csv = dir.path().join(format!("sample_{tag}.csv"));
        let rep = dir.path().join(format!("check_{tag}.json"));
        let p = path("example1.json");
        for args in [
            vec!["approx", &p, "--k", "2", "--certificate", "--out", psi.to_str().unwrap()],
            vec!["sample", &p, "--psi", psi.to_str().unwrap(), "--delta", "0.1", "--grid", "41", "--out", csv.to_str().unwrap()],
            vec!["check", &p, "--psi", psi.to_str().unwrap(), "--delta", "0.1", "--grid", "41", "--out", rep.to_str().unwrap()],
        ] {
            let out = sosvec(&args);
            assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
        }
        [psi, csv, rep].iter().map(|p| fs::read(p).unwrap()).collect()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let report: Value = serde_json::from_slice(&a[2]).unwrap();
    assert_eq!(report["violations"], 0);
    let psi: Value = serde_json::from_slice(&a[0]).unwrap();
    assert_eq!(psi["status"], "certified");
    assert!(psi["certificate"]["blocks"].is_array());
}

#[test]
fn shifted_box_outputs_original_coordinates() {
    let dir = TempDir::new().unwrap();
    // Example 1 translated by (+1, +1): disk around (1, 1) inside [0, 2]²
    let f = write(
        &dir,
        "shifted.json",
        r#"{"n": 2,
            "objectives": [{"p": [[1.0, [1, 0]]]}, {"p": [[1.0, [0, 1]]]},
                           {"p": [[1.0, [2, 0]], [1.0, [0, 2]]]}],
            "constraints": [[[-1.0, [0, 0]], [2.0, [1, 0]], [2.0, [0, 1]], [-1.0, [2, 0]], [-1.0, [0, 2]]]],
            "box": [[0.0, 2.0], [0.0, 2.0]]}"#,
    );
    let out = sosvec(&["sample", &f, "--k", "2", "--delta", "0.1", "--grid", "21"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut in_a = 0;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let (x1, x2) = (v[0], v[1]);
        assert!((0.0..=2.0).contains(&x1) && (0.0..=2.0).contains(&x2));
        if v[5] == 1.0 {
            assert!(1.0 - (x1 - 1.0).powi(2) - (x2 - 1.0).powi(2) >= -1e-12);
        }
        if v[6] == 1.0 {
            in_a += 1;
            // weakly efficient points of the shifted problem lie in the lower-left quarter
            assert!(x1 <= 1.0 + 0.3 && x2 <= 1.0 + 0.3, "{line}");
        }
    }
    assert!(in_a > 0);
}

#[test]
fn minimize_with_order_override() {
    let dir = TempDir::new().unwrap();
    let art = dir.path().join("psi.json");
    // ψ_1 is crude but cheap; the point is the command plumbing
    let out = sosvec(&["approx", &path("example1.json"), "--k", "1", "--out", art.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let target = write(&dir, "t.json", "[[1.0, [1, 0]]]");
    let out = sosvec(&[
        "minimize",
        &path("example1.json"),
        "--psi",
        art.to_str().unwrap(),
        "--delta",
        "10.0",
        "--objective",
        &target,
        "--order",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["order"], 2);
    assert!((v["value"].as_f64().unwrap() + 1.0).abs() < 1e-5, "{v}");
}
