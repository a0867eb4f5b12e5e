use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_qbsde");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const GOOD: &str = "name = \"zero\"\nseed = 1\n[task]\nkind = \"transforms\"\npoints = 100\n";
const BAD: &str = "name = \"bad_golden\"\nseed = 1\n[run]\npaths = 500\nsteps = 10\n\
                   [coefficient]\nkind = \"zero\"\n[monitors]\nenabled = false\n\
                   [task]\nkind = \"solve_pure\"\ngolden = 100.0\n";

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["levitate", "--config", "x.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("levitate"));
}

#[test]
fn subcommand_must_match_the_task() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", GOOD);
    let out = run(&["compare", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_error_points_at_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", &GOOD.replace("points = 100", "points = \"many\""));
    let out = run(&["transforms", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("task"));
}

#[test]
fn identity_transform_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", GOOD);
    let out = run(&["transforms", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let mut r = csv::Reader::from_path(dir.path().join("zero/transform_0.csv")).unwrap();
    let mut rows = 0;
    for row in r.records() {
        let row = row.unwrap();
        assert_eq!(row[0], row[1]);
        rows += 1;
    }
    assert!(rows > 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("zero/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenario"]["seed"], 1);
    assert_eq!(summary["outcome"]["pass"], true);
}

#[test]
fn empty_manifest_passes_with_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "manifest.toml", "scenarios = []\n");
    let out_dir = dir.path().join("out");
    let out = run(&["reproduce", "--config", &m, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert_eq!(fs::read_to_string(out_dir.join("acceptance.csv")).unwrap().trim(), "scenario,criterion,status");
}

#[test]
fn one_failing_scenario_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "good.toml", GOOD);
    write(dir.path(), "bad.toml", BAD);
    let m = write(dir.path(), "manifest.toml", "scenarios = [\"good.toml\", \"bad.toml\"]\n");
    let out_dir = dir.path().join("out");
    let out = run(&["reproduce", "--config", &m, "--out", out_dir.to_str().unwrap(), "--parallel", "2"]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    let table = fs::read_to_string(out_dir.join("acceptance.csv")).unwrap();
    assert_eq!(table.matches("FAIL").count(), 1, "{table}");
    assert!(table.contains("bad_golden,2,FAIL"), "{table}");
    assert!(table.contains("zero,1,PASS"), "{table}");
}

#[test]
fn duplicate_names_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.toml", GOOD);
    write(dir.path(), "b.toml", GOOD);
    let m = write(dir.path(), "manifest.toml", "scenarios = [\"a.toml\", \"b.toml\"]\n");
    let out = run(&["reproduce", "--config", &m, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn overrides_reach_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", GOOD);
    let out = run(&["transforms", "--config", &cfg, "--seed", "77", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("zero/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenario"]["seed"], 77);
}
