//! End-to-end runs of the `spherebraid` binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spherebraid"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spherebraid-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], out: &Path) -> i32 {
    let status = bin().args(args).arg("--out").arg(out).output().unwrap();
    status.status.code().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let base = scratch("threads");
    let cfg = write_config(&base, r#"{"loops": 12, "directions": 200}"#);
    let one = base.join("one");
    let many = base.join("many");
    assert_eq!(run(&["coarea-check", "--config", &cfg, "--threads", "1"], &one), 0);
    assert_eq!(run(&["coarea-check", "--config", &cfg, "--threads", "3"], &many), 0);
    for f in ["coarea_check.csv", "coarea_check.json"] {
        assert_eq!(read(&one, f), read(&many, f), "{f}");
    }
    let seq = base.join("seq");
    assert_eq!(run(&["gg-check", "--samples", "60", "--sequential"], &seq), 0);
    let par = base.join("par");
    assert_eq!(run(&["gg-check", "--samples", "60", "--threads", "2"], &par), 0);
    assert_eq!(read(&seq, "gg_check.json"), read(&par, "gg_check.json"));
    assert_eq!(read(&seq, "gg_check.csv"), read(&par, "gg_check.csv"));
}

#[test]
fn json_records_hash_seed_and_version() {
    let base = scratch("hash");
    let a = base.join("a");
    let b = base.join("b");
    assert_eq!(run(&["embed-demo", "--seed", "5"], &a), 0);
    assert_eq!(run(&["embed-demo", "--seed", "6"], &b), 0);
    let ja: serde_json::Value = serde_json::from_str(&read(&a, "embed_demo.json")).unwrap();
    let jb: serde_json::Value = serde_json::from_str(&read(&b, "embed_demo.json")).unwrap();
    assert_eq!(ja["seed"], 5);
    assert!(ja["artifact_version"].as_str().unwrap().starts_with("spherebraid/"));
    let hash = ja["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert_ne!(hash, jb["config_hash"].as_str().unwrap());
    // Spelling the defaults out in a file does not change the hash.
    let cfg = write_config(&base, r#"{"seed": 5.0, "p": 3, "d": 2, "vectors": 20}"#);
    let c = base.join("c");
    assert_eq!(run(&["embed-demo", "--config", &cfg], &c), 0);
    let jc: serde_json::Value = serde_json::from_str(&read(&c, "embed_demo.json")).unwrap();
    assert_eq!(jc["config_hash"], ja["config_hash"]);
}

#[test]
fn csv_dialect() {
    let out = scratch("csv");
    assert_eq!(run(&["lp-length", "--p", "2", "--measure", "2pi"], &out), 0);
    let csv = read(&out, "lp_length.csv");
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("T,p,length,length_over_T,closed_form"));
    for l in lines {
        assert_eq!(l.split(',').count(), 5, "{l}");
        assert!(l.split(',').all(|c| c.parse::<f64>().is_ok()), "{l}");
    }
    assert!(csv.ends_with('\n'));
}

#[test]
fn exit_codes() {
    let base = scratch("exit");
    let bad = write_config(&base, r#"{"n_points": "many"}"#);
    assert_eq!(run(&["gg-check", "--config", &bad], &base.join("bad")), 4);
    assert_eq!(run(&["gg-check", "--config", "/nonexistent/config.json"], &base.join("missing")), 4);
    assert_eq!(run(&["lp-length", "--measure", "furlongs"], &base.join("measure")), 4);
    assert_eq!(run(&["lp-length", "--p", "0.5"], &base.join("p")), 4);

    let clash = write_config(&base, r#"{"points": [[0.5, 0.0], [0.5, 0.0]]}"#);
    let out = base.join("clash");
    assert_eq!(run(&["braid-of-flow", "--config", &clash], &out), 3);
    let j: serde_json::Value = serde_json::from_str(&read(&out, "braid_of_flow.json")).unwrap();
    assert_eq!(j["exit_code"], 3);

    // Comparing the four-point estimate against the six-point formula must fail.
    let wrong = write_config(&base, r#"{"gg_n": 3, "rel_tolerance": 0.0, "sigmas": 1.0}"#);
    assert_eq!(run(&["gg-check", "--config", &wrong, "--samples", "300"], &base.join("wrong")), 2);
}

#[test]
fn braid_of_flow_prints_word_and_permutation() {
    let base = scratch("braid");
    let cfg = write_config(
        &base,
        r#"{"profile": {"knots": [[0.0, 0.0], [1.0, 0.0], [1.2, 1.0]]}, "points": [[0.3, 0.1], [2.0, -0.4]], "omega_angle": 0.3}"#,
    );
    let out = bin().args(["braid-of-flow", "--config", &cfg, "--out"]).arg(&base).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "1 1\npermutation: identity\n");
}
