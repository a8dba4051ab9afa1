use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_lienard");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn schema(cmd: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../schemas/{cmd}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(out: &Path, cmd: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join(format!("{cmd}.json"))).unwrap()).unwrap()
}

fn assert_valid(cmd: &str, doc: &Value) {
    let validator = jsonschema::validator_for(&schema(cmd)).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{cmd}: {errors:#?}");
}

/// Fast argument sets covering every subcommand.
fn cases() -> Vec<(&'static str, Vec<&'static str>)> {
    vec![
        ("check", vec!["check", "--system", "ellipses"]),
        ("simulate", vec!["simulate", "--system", "squares", "--t-max", "20"]),
        ("roa", vec!["roa", "--system", "ellipses", "--resolution", "17"]),
        ("eigen", vec!["eigen", "--system", "cubic"]),
        ("probe", vec!["probe", "--system", "ellipses", "--count", "4"]),
        ("attract", vec!["attract", "--system", "ellipses", "--level", "0.25", "--samples", "8", "--t-max", "200"]),
        ("periodic", vec!["periodic", "--system", "squares", "--eps", "0.1,0.05"]),
    ]
}

#[test]
fn every_report_matches_its_schema() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, args) in cases() {
        let out = dir.path().join(cmd);
        let o = run(&out, &args);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let doc = report(&out, cmd);
        assert_eq!(doc["command"], cmd);
        assert_eq!(doc["exit_code"], 0);
        assert_valid(cmd, &doc);
        assert!(out.join(format!("{cmd}.txt")).exists());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, args) in cases() {
        let a = dir.path().join(format!("{cmd}-a"));
        let b = dir.path().join(format!("{cmd}-b"));
        run(&a, &args);
        run(&b, &args);
        let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let x = std::fs::read(a.join(&name)).unwrap();
            let y = std::fs::read(b.join(&name)).unwrap();
            assert!(x == y, "{cmd}: {name:?} differs");
        }
    }
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["intro", "squares", "ellipses"] {
        assert_eq!(run(dir.path(), &["check", "--system", name]).status.code(), Some(0), "{name}");
    }
    assert_eq!(run(dir.path(), &["check", "--system", "oscillator"]).status.code(), Some(1));
    let circle = fixture("circle.toml");
    let o = run(dir.path(), &["check", "--config", circle.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let doc = report(dir.path(), "check");
    assert_valid("check", &doc);
    let continuum = doc["report"]["subsets"]
        .as_array()
        .unwrap()
        .iter()
        .any(|s| s["verdict"] == "suspected_continuum");
    assert!(continuum);
}

#[test]
fn configuration_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["check", "--system", "nope"]).status.code(), Some(64));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[system]\nf = [\"x1 +\"]\ng = [\"x1\"]\ndomain = [[-1.0, 1.0]]\n").unwrap();
    let o = run(dir.path(), &["check", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&o.stderr).contains("position 5"));
    let o = run(dir.path(), &["periodic", "--system", "squares", "--eps", "0.05,0.1"]);
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn leaving_the_domain_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--system", "oscillator", "--z0", "4.5,0,3,0", "--t-max", "10"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(dir.path(), "simulate")["report"]["termination"], "left_domain");
}

#[test]
fn simulation_from_the_origin_is_a_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--system", "squares", "--z0", "0,0,0,0"]);
    assert_eq!(o.status.code(), Some(0));
    let doc = report(dir.path(), "simulate");
    assert_eq!(doc["report"]["points"], 1);
    assert_eq!(doc["report"]["termination"], "converged_to_origin");
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn attract_refuses_failed_check() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["attract", "--system", "oscillator", "--samples", "4", "--t-max", "10"];
    assert_eq!(run(dir.path(), &args).status.code(), Some(6));
    let mut forced = args.to_vec();
    forced.push("--allow-failed-check");
    let o = run(dir.path(), &forced);
    // Undamped orbits never converge, so the sampling itself fails.
    assert_eq!(o.status.code(), Some(6));
    let doc = report(dir.path(), "attract");
    assert_valid("attract", &doc);
    assert_eq!(doc["report"]["attraction"]["converged_count"], 0);
}

#[test]
fn show_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["show-config", "--config", fixture("circle.toml").to_str().unwrap(), "--seed", "9"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let path = dir.path().join("effective.toml");
    std::fs::write(&path, &text).unwrap();
    let again = Command::new(BIN)
        .args(["show-config", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
    assert!(text.contains("seed = 9"));
}
