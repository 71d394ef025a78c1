//! Replays the checked-in fuzz seeds through the parsers.

use std::fs;
use std::path::PathBuf;

use oneshot_core::io::*;
use oneshot_core::theories::{builtin_theory, LadderSpec};
use oneshot_core::Ctx;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn matrix_seeds() {
    for (name, s) in seeds("parse_matrix") {
        assert_eq!(parse_matrix(&s).is_ok(), name != "short.json", "{name}");
    }
}

#[test]
fn state_seeds() {
    let ctx = Ctx::default();
    for (name, s) in seeds("parse_state") {
        assert_eq!(parse_state(&s, &ctx.tol).is_ok(), name != "not_psd.json", "{name}");
    }
}

#[test]
fn choi_seeds() {
    for (name, s) in seeds("parse_choi") {
        parse_choi(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn theory_seeds() {
    let ctx = Ctx::default();
    for (name, s) in seeds("parse_theory") {
        parse_theory(&s, &ctx).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn ladder_seeds() {
    for (name, s) in seeds("ladder_spec") {
        let ladder = LadderSpec::parse(&s).is_ok();
        let theory = builtin_theory(&s).is_ok();
        assert!(ladder || theory, "{name}");
    }
}

#[test]
fn manifest_seeds() {
    for (name, s) in seeds("parse_manifest") {
        assert_eq!(parse_manifest(&s).is_ok(), name != "empty_run.json", "{name}");
    }
}
