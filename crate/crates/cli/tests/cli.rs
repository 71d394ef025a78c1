use std::path::PathBuf;
use std::process::{Command, Output};

use oneshot_cli::{BoundsRow, ConvertReport, MeasureRow, Outcome};
use oneshot_core::golden::GoldenReport;
use oneshot_core::io::from_json;
use oneshot_core::theories::TheoryClassification;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oneshot")).args(args).env_remove("ONESHOT_TOL_PROFILE").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("oneshot-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn measure_json_round_trips() {
    let o = run(&["measure", "--theory", "magic1", "--state", "builtin:T", "--kind", "dmax"]);
    assert_eq!(code(&o), 0);
    let row: MeasureRow = from_json(&stdout(&o)).unwrap();
    assert!((row.report.value - (4.0 - 2.0 * 2f64.sqrt()).log2()).abs() < 1e-6);
    assert_eq!(oneshot_core::io::to_json(&row).unwrap() + "\n", stdout(&o));
}

#[test]
fn csv_headers_name_the_quantity() {
    let o = run(&["measure", "--theory", "coherence:2", "--state", "builtin:T", "--kind", "smooth-dmax", "--epsilon", "0,0.1", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().contains("Dmax_eps_bits"));
    let vals: Vec<f64> = lines.map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert_eq!(vals.len(), 2);
    assert!((vals[0] - 1.0).abs() < 1e-6 && (vals[1] - 1.8f64.log2()).abs() < 1e-6);
}

#[test]
fn deterministic_output() {
    let args = ["golden", "--theory", "magic1", "--seed", "5", "--starts", "4"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let g: GoldenReport = from_json(&stdout(&a)).unwrap();
    assert!(g.collapse);
}

#[test]
fn classify_and_bounds() {
    let o = run(&["classify", "--theory", "magic1"]);
    assert_eq!(code(&o), 0);
    let c: TheoryClassification = from_json(&stdout(&o)).unwrap();
    assert!(c.ffr.value);

    let o = run(&["bounds", "--task", "formation", "--theory", "coherence:2", "--state", "builtin:T", "--ladder", "all:4", "--sandwich"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let row: BoundsRow = from_json(&stdout(&o)).unwrap();
    assert!(row.sandwich.unwrap().ordered);
    assert!(matches!(row.lower, Outcome::Done(_)));
}

#[test]
fn convert_emits_valid_certificate() {
    let o = run(&["convert", "--task", "formation", "--theory", "coherence:2", "--state", "builtin:T", "--epsilon", "0.1"]);
    assert_eq!(code(&o), 0);
    let r: ConvertReport = from_json(&stdout(&o)).unwrap();
    assert!(r.certificate.valid);
    assert!(r.certificate.fidelity >= 0.9 - 1e-7);
}

#[test]
fn exit_code_classes() {
    // unreadable input, bad arguments
    assert_eq!(code(&run(&["measure", "--theory", "magic1", "--state", "/nonexistent.json", "--kind", "dmax"])), 1);
    assert_eq!(code(&run(&["measure", "--theory", "magic1", "--state", "builtin:T", "--kind", "nope"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["measure", "--theory", "magic1", "--state", "builtin:T", "--kind", "dmax", "--profile", "bogus"])), 1);
    let bad = scratch("bad.json");
    std::fs::write(&bad, "{\"dim\": 2, \"entries\": [[1, 0]]}").unwrap();
    assert_eq!(code(&run(&["measure", "--theory", "magic1", "--state", bad.to_str().unwrap(), "--kind", "dmax"])), 1);
    // precondition: no qualifying d0, dimension mismatch, missing RD map
    assert_eq!(code(&run(&["convert", "--task", "distillation", "--theory", "magic1", "--state", "builtin:T"])), 2);
    assert_eq!(code(&run(&["measure", "--state", "builtin:T", "--sigma", "builtin:mixed:3", "--kind", "dmax"])), 2);
    assert_eq!(code(&run(&["measure", "--theory", "superposition", "--state", "builtin:T", "--kind", "lambda-dmax"])), 2);
}

#[test]
fn env_profile_is_honoured() {
    let o = Command::new(env!("CARGO_BIN_EXE_oneshot"))
        .args(["measure", "--state", "builtin:T", "--sigma", "builtin:mixed:2", "--kind", "dmax"])
        .env("ONESHOT_TOL_PROFILE", "nonsense")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    let o = Command::new(env!("CARGO_BIN_EXE_oneshot"))
        .args(["measure", "--state", "builtin:T", "--sigma", "builtin:mixed:2", "--kind", "dmax"])
        .env("ONESHOT_TOL_PROFILE", "strict")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn output_file_and_batch() {
    let out = scratch("measure.csv");
    let o = run(&["measure", "--theory", "magic1", "--state", "builtin:T", "--kind", "robustness", "--format", "csv", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("theory,state,epsilon,LR_bits"));

    let manifest = scratch("manifest.json");
    std::fs::write(
        &manifest,
        r#"{"runs": [
            ["measure", "--theory", "magic1", "--state", "builtin:T", "--kind", "dmax"],
            ["convert", "--task", "distillation", "--theory", "magic1", "--state", "builtin:T"],
            ["classify", "--theory", "coherence:2"]
        ]}"#,
    )
    .unwrap();
    let a = run(&["batch", "--manifest", manifest.to_str().unwrap()]);
    let b = run(&["batch", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(code(&a), 2);
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    let codes: Vec<i64> = v["runs"].as_array().unwrap().iter().map(|r| r["exit_code"].as_i64().unwrap()).collect();
    assert_eq!(codes, vec![0, 2, 0]);
    assert_eq!(code(&run(&["batch", "--manifest", "/nonexistent.json"])), 1);
}
