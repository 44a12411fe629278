use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use asdiloc::io::read_trace_csv;
use serde_json::Value;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios")
}

fn asdiloc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asdiloc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn bundled(name: &str) -> String {
    scenarios().join(name).display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(out: &Path) -> Vec<Value> {
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    v["runs"].as_array().unwrap().clone()
}

#[test]
fn run_strategy_two_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = bundled("example1.json");
    let schedule = bundled("strategy2.json");
    let o = asdiloc(&["run", "--scenario", &scenario, "--schedule", &schedule, "--algorithm", "asdiloc"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!summary(dir.path())[0]["converged_at"].is_null());

    let o = asdiloc(
        &["run", "--scenario", &scenario, "--schedule", &schedule, "--algorithm", "diloc", "--max-iters", "500"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "divergence is data, not failure");
    let runs = summary(dir.path());
    assert!(runs[0]["converged_at"].is_null());
    assert!(runs[0]["final_error"].as_f64().unwrap() > 1e-2);
}

#[test]
fn missing_scenario_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = asdiloc(&["run", "--scenario", "/no/such/scenario.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/scenario.json"));
}

#[test]
fn bad_fields_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"anchors": [], "sensors": [], "gamma": "half"}"#).unwrap();
    let o = asdiloc(&["run", "--scenario", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.json"));

    let o = asdiloc(&["run", "--scenario", &bundled("example1.json"), "--gamma", "1.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));

    fs::write(&bad, r#"{"type": "periodic", "stride": 3}"#).unwrap();
    let o = asdiloc(&["run", "--scenario", &bundled("example1.json"), "--schedule", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dwell"), "{}", stderr(&o));
}

#[test]
fn verify_strategy_one_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = asdiloc(&["verify", "--scenario", &bundled("example1.json"), "--schedule", &bundled("strategy1.json")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("verify_strategy1.txt")).unwrap();
    assert!(report.ends_with("result,pass\n"));
    assert!(report.contains("P,2\n"));
}

#[test]
fn verify_ten_random_schedules_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = asdiloc(&["verify", "--scenario", &bundled("example1.json"), "--random-count", "10", "--seed", "100"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines = fs::read_to_string(dir.path().join("verify_summary.csv")).unwrap();
    assert_eq!(lines.lines().filter(|l| l.ends_with(",pass")).count(), 10);
}

#[test]
fn overlapping_schedule_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("overlap.json");
    fs::write(
        &sched,
        r#"{"type": "explicit", "periods": [{"s": 0, "phi": 2, "links": [[2, 4]]}, {"s": 2, "phi": 0, "links": [[2, 4]]}]}"#,
    )
    .unwrap();
    let args = ["verify", "--scenario", &bundled("example1.json"), "--schedule", sched.to_str().unwrap()];
    let o = asdiloc(&args, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("overlap.json"));
    let mut lax = args.to_vec();
    lax.push("--allow-invalid-schedule");
    assert_eq!(asdiloc(&lax, dir.path()).status.code(), Some(2), "overlaps stay invalid");
}

#[test]
fn verify_failure_exits_one() {
    // back-to-back periods cut sensor 7 off for good
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("starve.json");
    fs::write(
        &sched,
        r#"{"type": "periodic", "stride": 2, "dwell": 1, "links": [[4, 7], [5, 7], [6, 7]]}"#,
    )
    .unwrap();
    let o = asdiloc(
        &[
            "verify",
            "--scenario",
            &bundled("example1.json"),
            "--schedule",
            sched.to_str().unwrap(),
            "--allow-invalid-schedule",
            "--max-iters",
            "300",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("starve"));
}

#[test]
fn compare_bundled_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let o = asdiloc(
        &[
            "compare",
            "--scenario",
            &bundled("example1.json"),
            "--schedule",
            &bundled("strategy1.json"),
            "--schedule",
            &bundled("strategy2.json"),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    let converged = |sched: &str, alg: &str| rows.iter().find(|r| r[0] == sched && r[1] == alg).unwrap()[2] != "none";
    assert!(converged("strategy1", "diloc") && converged("strategy1", "asdiloc"));
    assert!(!converged("strategy2", "diloc") && converged("strategy2", "asdiloc"));
}

#[test]
fn compare_without_attacks_gives_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    let o = asdiloc(&["compare", "--scenario", &bundled("example1.json"), "--max-iters", "400", "--full-trace"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read(dir.path().join("trace_none_diloc.csv")).unwrap();
    let b = fs::read(dir.path().join("trace_none_asdiloc.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trace_files_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let o = asdiloc(
        &["run", "--scenario", &bundled("example1.json"), "--schedule", &bundled("strategy2.json"), "--max-iters", "50", "--full-trace"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_trace_csv(fs::File::open(dir.path().join("trace_strategy2_asdiloc.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 51 * 4);
    // sensor 7 is frozen at t = 3k + 1 and t = 3k under strategy II
    let masked: Vec<usize> = rows.iter().filter(|r| r.sensor_id == 7 && r.masked == 1).map(|r| r.t).collect();
    assert!(masked.iter().all(|t| t % 3 != 2));
    assert_eq!(masked.len(), 34);
}

#[test]
fn dumped_random_schedule_replays() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = bundled("example1.json");
    let o = asdiloc(&["run", "--scenario", &scenario, "--random-count", "1", "--seed", "9", "--dump-schedules", "--max-iters", "300", "--full-trace"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let replay_dir = tempfile::tempdir().unwrap();
    let dumped = dir.path().join("schedule_random-9.json");
    let o = asdiloc(&["run", "--scenario", &scenario, "--schedule", dumped.to_str().unwrap(), "--max-iters", "300", "--full-trace"], replay_dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for alg in ["diloc", "asdiloc"] {
        let a = fs::read(dir.path().join(format!("trace_random-9_{alg}.csv"))).unwrap();
        let b = fs::read(replay_dir.path().join(format!("trace_schedule_random-9_{alg}.csv"))).unwrap();
        assert_eq!(a, b);
    }
}
