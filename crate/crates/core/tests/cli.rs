//! Runs the binary end to end on small configurations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_replica-decay"))
        .args(args)
        .env_remove("REPLICA_DECAY_THREADS")
        .output()
        .unwrap()
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

const STABLE: [&str; 3] = ["--model.d=2", "--model.lambda=1", "--model.beta=2"];

#[test]
fn simulate_writes_stats_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = run(&["simulate", "--out", out, "--model.n_servers=[20,40]", "--sim.horizon=5", "--sim.grid_step=0.5"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = csv(&dir.path().join("stats_N40.csv"));
    assert_eq!(header[..3], ["t", "mean_0", "var_0"]);
    assert_eq!(header.len(), 1 + 2 * 5);
    assert_eq!(rows.len(), 11);
    let (header, rows) = csv(&dir.path().join("trajectory_N20.csv"));
    assert_eq!(header, ["t", "x_0", "x_1", "x_2", "x_3", "x_4"]);
    for row in rows {
        assert!((row[1..].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn manifest_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let res = run(&["compare", "--out", first.to_str().unwrap(), "--seed", "9", "--model.n_servers=100"]);
    assert!(res.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    let second = dir.path().join("b");
    let res = run(&[
        "compare",
        "--config",
        first.join("manifest.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert!(res.status.success());
    for name in ["stats_N100.csv", "compare_N100.csv"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap());
    }
    let (header, rows) = csv(&first.join("compare_N100.csv"));
    assert_eq!(header, ["k", "sup_error"]);
    assert_eq!(rows.len(), 5);
}

#[test]
fn decay_table_reads_one_at_the_half_time() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["decay", "--out", dir.path().to_str().unwrap(), "--model.d=3", "--model.lambda=1"];
    args.extend(["--model.beta=2", "--sim.horizon=70", "--sim.grid_step=0.01"]);
    assert!(run(&args).status.success());
    let (header, rows) = csv(&dir.path().join("decay.csv"));
    assert_eq!(header, ["t", "phi", "r"]);
    assert_eq!(rows.len(), 7001);
    let row = &rows[6552];
    assert!((row[0] - 65.52).abs() < 1e-9);
    assert!((row[1] - 1.0).abs() < 5e-4, "{row:?}");
}

#[test]
fn boundary_regime_exits_with_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    // rho = 3 = d * beta
    let res = run(&["simulate", "--out", dir.path().to_str().unwrap(), "--model.d=3", "--model.lambda=0.3"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("eps_regime"));
    let res = run(&["fluid", "--model.nope=1"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("model.nope"));
}

#[test]
fn event_cap_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["simulate", "--out", dir.path().to_str().unwrap(), "--model.n_servers=30", "--sim.event_cap=50"]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn stable_experiments_follow_their_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    let common = |sub: &str| {
        let mut v: Vec<String> = vec![sub.into(), "--out".into(), base.join(sub).to_str().unwrap().into()];
        v.extend(STABLE.iter().map(|s| s.to_string()));
        v.extend(["--model.n_servers=50", "--sim.q=1", "--sim.horizon=4", "--sim.grid_step=2"].map(String::from));
        v
    };
    let call = |v: Vec<String>| {
        let refs: Vec<&str> = v.iter().map(String::as_str).collect();
        let res = run(&refs);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    };

    let mut fluct = common("fluct");
    fluct.extend(["--options.sde_paths=100", "--options.sde_step=0.01"].map(String::from));
    call(fluct);
    let (header, rows) = csv(&base.join("fluct/fluct_N50.csv"));
    assert_eq!(header, ["t", "mean_W", "var_W_sde", "var_W_emp"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1..], [0.0, 0.0, 0.0]);

    let mut fp = common("first-passage");
    fp.push("--sim.replications=4".into());
    call(fp);
    let (header, rows) = csv(&base.join("first-passage/first_passage_N50.csv"));
    assert_eq!(header, ["replication", "T", "T_over_scale"]);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| (r[1] / 50.0 - r[2]).abs() < 1e-9 * r[1]));

    call(common("occupancy"));
    let (header, rows) = csv(&base.join("occupancy/occupancy_N50.csv"));
    assert_eq!(header, ["value", "empirical", "geometric"]);
    assert!((rows.iter().map(|r| r[1]).sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn fluid_and_skorohod_agree() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path();
    for sub in ["fluid", "skorohod"] {
        let out = base.join(sub);
        let res = run(&[sub, "--out", out.to_str().unwrap(), "--sim.horizon=10", "--sim.grid_step=0.5", "--options.numeric_step=0.01"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let (h1, fluid) = csv(&base.join("fluid/fluid.csv"));
    let (h2, numeric) = csv(&base.join("skorohod/skorohod.csv"));
    assert_eq!(h1, h2);
    assert_eq!(fluid.len(), 21);
    for (a, b) in fluid.iter().zip(&numeric) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-4);
        }
    }
    let (header, rows) = csv(&base.join("fluid/thresholds.csv"));
    assert_eq!(header, ["level", "t"]);
    assert!((rows[0][1] - 5.2325).abs() < 1e-3);
}
