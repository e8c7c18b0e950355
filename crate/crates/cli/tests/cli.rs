use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scenario-opt"));
    c.env_remove("SCENARIO_OPT_THREADS");
    c
}

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn samplesize_examples() {
    for (args, k) in [
        (vec!["--zeta", "2", "--eps", "0.01", "--theta", "5e-7"], "1734"),
        (vec!["--zeta", "1", "--eps", "0.5", "--theta", "0.5"], "1"),
        (vec!["--zeta", "2", "--eps", "0.1", "--theta", "1e-6", "--method", "chernoff"], "297"),
    ] {
        let o = run(&[&["samplesize"], args.as_slice()].concat());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(k));
        assert!(lines.next().unwrap().starts_with("bound="));
    }
}

#[test]
fn input_errors_exit_with_two() {
    assert_eq!(run(&["samplesize", "--zeta", "2", "--eps", "1.5", "--theta", "1e-6"]).status.code(), Some(2));
    assert_eq!(run(&["samplesize", "--zeta", "2", "--eps", "0.1", "--theta", "0"]).status.code(), Some(2));
    assert_eq!(run(&["plan", "--spec", "/nonexistent.json"]).status.code(), Some(2));
    let spec = example("order_statistics");
    let o = run(&["plan", "--spec", spec.to_str().unwrap(), "--R", "1,2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_instance_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("infeasible.json");
    // x ≥ δ with δ ∈ [20, 30] cannot hold inside [-10, 10].
    let spec = std::fs::read_to_string(example("order_statistics"))
        .unwrap()
        .replace("\"low\": [0.0], \"high\": [1.0]", "\"low\": [20.0], \"high\": [30.0]");
    assert!(spec.contains("20.0"));
    std::fs::write(&path, spec).unwrap();
    let o = run(&["solve", "--spec", path.to_str().unwrap(), "--sizes", "5"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json(&o)["status"], "infeasible");
}

#[test]
fn greedy_removal_lowers_objective() {
    let spec = example("order_statistics");
    let o = run(&["solve", "--spec", spec.to_str().unwrap(), "--sizes", "40", "--R", "5", "--seed", "3", "--discard", "greedy"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = json(&o);
    let removal = &out["removal"];
    assert_eq!(removal["removed"][0].as_array().unwrap().len(), 5);
    let full = run(&["solve", "--spec", spec.to_str().unwrap(), "--sizes", "40", "--seed", "3"]);
    let full = json(&full);
    assert!(full["objective"].as_f64().unwrap() > out["objective"].as_f64().unwrap());
    assert_eq!(removal["assumption"][0], "violated-by-reduced");
}

#[test]
fn solve_is_deterministic_and_threads_do_not_matter() {
    let spec = example("monotonicity");
    let args = ["solve", "--spec", spec.to_str().unwrap(), "--seed", "11", "--validate", "100000"];
    let a = run(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = bin().args(args).arg("--threads").arg("1").output().unwrap();
    let c = bin().args(args).env("SCENARIO_OPT_THREADS", "3").output().unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let v = json(&a);
    assert_eq!(v["validation"].as_array().unwrap().len(), 2);
    assert!(v["support_sets"].is_array());
}

#[test]
fn manifests_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let spec = example("cuboid");
    let out = dir.path().join("solution.json");
    let o = run(&[
        "--manifest-dir",
        dir.path().to_str().unwrap(),
        "solve",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let solution: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let id = solution["manifest_id"].as_str().unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("manifest-{id}.json"))).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["outputs"][0], out.to_str().unwrap());
}

#[test]
fn validate_survey_and_point() {
    let dir = tempfile::tempdir().unwrap();
    let spec = example("order_statistics");
    let csv = dir.path().join("survey.csv");
    let o = run(&[
        "validate", "--spec", spec.to_str().unwrap(), "--sizes", "10", "--replications", "50", "--exact",
        "--survey", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# manifest="));
    assert_eq!(text.lines().count(), 52);
    let o = run(&["validate", "--spec", spec.to_str().unwrap(), "--point", "0.95", "--n-val", "10000"]);
    let est = &json(&o)["estimates"][0];
    assert!((est["point"].as_f64().unwrap() - 0.05).abs() < 0.01);
}

#[test]
fn cuboid_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["cuboid", "table1", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let a = std::fs::read_to_string(dir.path().join("table1a.csv")).unwrap();
    assert!(a.contains("\n1%,1734,1777,1831,1903,2072,2144,2311\n"));
    let b = std::fs::read_to_string(dir.path().join("table1b.csv")).unwrap();
    assert!(b.contains("\n1%,2334,2722,3431,5020,15588,27535,115786\n"));
    let o = run(&["cuboid", "table2", "--reps", "200", "--n", "2,3", "--eps", "0.1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);
}
