use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rrhinf::{GainsFile, ProblemConfig};

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/chua.json")
}

fn rrhinf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrhinf"))
        .args(args)
        .env_remove("RRHINF_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth_into(dir: &Path, extra: &[&str]) -> (PathBuf, Output) {
    let gains = dir.join("gains.json");
    let cfg = config();
    let mut args = vec!["synth", cfg.to_str().unwrap(), "--out", gains.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = rrhinf(&args);
    (gains, out)
}

#[test]
fn synth_then_certify() {
    let dir = tempfile::tempdir().unwrap();
    let sdpa = dir.path().join("program.dat-s");
    let (gains, out) = synth_into(dir.path(), &["--dump-sdpa", sdpa.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("analysis check: PASS"));

    let file = GainsFile::from_path(&gains).unwrap();
    assert!(
        file.gamma_sq > 0.40 && file.gamma_sq < 0.80,
        "gamma^2 = {}",
        file.gamma_sq
    );
    assert_eq!(file.nodes, 3);
    assert!(file.variables.is_some());
    let dump = std::fs::read_to_string(&sdpa).unwrap();
    assert!(dump.lines().any(|l| l.trim() == "14"), "block count line missing");

    let report = dir.path().join("report.json");
    let out = rrhinf(&[
        "certify",
        config().to_str().unwrap(),
        gains.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("\"all_passed\": true"));
}

#[test]
fn simulate_reports_and_validates_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (gains, out) = synth_into(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let traj = dir.path().join("traj.csv");
    let events = dir.path().join("events.csv");
    let cfg = config();
    let base = ["simulate", cfg.to_str().unwrap(), gains.to_str().unwrap(), "--T", "5"];

    let mut args = base.to_vec();
    args.extend([
        "--disturbance",
        "pulse:0.5:0.25",
        "--x0",
        "1,-1,0.5",
        "--out",
        traj.to_str().unwrap(),
        "--events",
        events.to_str().unwrap(),
    ]);
    let out = rrhinf(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = stdout(&out);
    assert!(s.contains("within bound"), "{s}");
    // 5 s / 0.1 s = 50 periods, one refresh per node that has in-neighbours
    // (nodes 1 and 2; node 3 only sends)
    let ev = std::fs::read_to_string(&events).unwrap();
    assert_eq!(ev.lines().count(), 1 + 50 * 2);
    let tr = std::fs::read_to_string(&traj).unwrap();
    assert_eq!(tr.lines().count(), 1 + 50 * 50 + 1);

    // step that does not divide the period
    let mut args = base.to_vec();
    args.extend(["--h", "0.003"]);
    assert_eq!(rrhinf(&args).status.code(), Some(4));

    // wrong disturbance dimension
    let mut args = base.to_vec();
    args.extend(["--disturbance", "sine:1:0.1", "--amplitude", "1,1"]);
    assert_eq!(rrhinf(&args).status.code(), Some(4));

    // gains for a different state dimension
    let text = std::fs::read_to_string(&gains).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text.replace("\"state_dim\": 3", "\"state_dim\": 4")).unwrap();
    let out = rrhinf(&["simulate", cfg.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn infeasible_gamma_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = synth_into(dir.path(), &["--gamma", "0.1"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_all_infeasible_still_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config()).unwrap();
    let mut cfg = ProblemConfig::from_json(&text).unwrap();
    cfg.synthesis.gamma = Some(0.1);
    let path = dir.path().join("fixed.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = rrhinf(&[
        "sweep",
        path.to_str().unwrap(),
        "--deltas",
        "0.05,0.1",
        "--eps",
        "0.1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "delta,eps,status,gamma_sq,wall_ms");
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.contains(",infeasible,")), "{table}");
}

#[test]
fn bad_inputs_exit_4() {
    assert_eq!(rrhinf(&["synth", "/definitely/not/here.json"]).status.code(), Some(4));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"plant\": 1}").unwrap();
    assert_eq!(rrhinf(&["synth", bad.to_str().unwrap()]).status.code(), Some(4));

    let out = Command::new(env!("CARGO_BIN_EXE_rrhinf"))
        .args(["synth", config().to_str().unwrap()])
        .env("RRHINF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}
