use std::fs;
use std::process::{Command, Output};

fn sciltl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sciltl")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const BAD_MODEL: &str = "\
states 2
actions go
observations o
init 0 1
T 0 go 1 0.7
T 1 go 1 1
O 0 o 1
O 1 o 1
atom a {1:1} > 0.5
objective F a
";

#[test]
fn compile_reports_state_counts() {
    let o = sciltl(&["compile", "--builtin", "drone-probing"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("3 live states, 1 dead state (4 total)"), "{out}");
    assert!(out.contains("digraph dfa"));
}

#[test]
fn compile_writes_dot_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = sciltl(&[
        "compile",
        "--builtin",
        "drone-probing",
        "--formula",
        "F measured",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("2 live states, 0 dead states (2 total)"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("dfa.json")).unwrap()).unwrap();
    assert_eq!(json["states"].as_array().unwrap().len(), 2);
    assert!(fs::read_to_string(dir.path().join("dfa.dot")).unwrap().contains("doublecircle"));
}

#[test]
fn validate_reports_row_sum() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.pomdp");
    fs::write(&path, BAD_MODEL).unwrap();
    let o = sciltl(&["validate", "--model", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("transition row (0, 0) sums to 0.7"), "{err}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(sciltl(&["compile"]).status.code(), Some(2));
    assert_eq!(sciltl(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(sciltl(&["plan", "--builtin", "drone-probing", "--sims", "many"]).status.code(), Some(2));
    assert_eq!(sciltl(&["--help"]).status.code(), Some(0));
}

#[test]
fn export_then_validate_round_trip() {
    let o = sciltl(&["export", "--builtin", "drone-probing", "--width", "3", "--height", "3"]);
    assert!(o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("drone.pomdp");
    fs::write(&path, o.stdout).unwrap();
    let v = sciltl(&["validate", "--model", path.to_str().unwrap()]);
    assert!(v.status.success(), "{}", stderr(&v));
    assert!(stdout(&v).starts_with("ok: 81 states, 5 actions, 5 observations, 2 atoms"));
}

#[test]
fn plan_prints_root_table() {
    let o = sciltl(&["plan", "--builtin", "drone-probing", "--sims", "200", "--depth", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "action,visits,value");
    assert_eq!(lines.len(), 7);
    assert!(lines[6].starts_with("best "));
}

#[test]
fn episode_logs_one_line_per_step() {
    let o = sciltl(&[
        "episode", "--builtin", "drone-probing", "--sims", "100", "--depth", "6", "--horizon", "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("step,action,observation,q,reward,max_belief"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty() && rows.len() <= 5);
    assert!(rows.iter().all(|r| r.split(',').count() == 6));
}

#[test]
fn experiment_writes_csvs_deterministically() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let o = sciltl(&[
            "experiment", "--builtin", "drone-probing", "--width", "3", "--height", "3", "--runs", "3", "--sims",
            "50", "--depth", "6", "--horizon", "20", "--seed", "7", "--out", d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("success "));
    }
    for f in ["episodes.csv", "steps_hist.csv", "belief_inf.csv", "summary.csv"] {
        let a = fs::read(dirs[0].path().join(f)).unwrap();
        assert_eq!(a, fs::read(dirs[1].path().join(f)).unwrap(), "{f}");
    }
    let episodes = fs::read_to_string(dirs[0].path().join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().next(), Some("run,success,steps,cause"));
    assert_eq!(episodes.lines().count(), 4);
}
