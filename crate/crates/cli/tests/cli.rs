use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fjsync(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fjsync"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

const SIM: [&str; 13] = [
    "simulate", "--lambda", "0.3", "--n-a", "1", "--mu-a", "0.8", "--n-b", "1", "--mu-b", "0.8", "--jobs", "3000",
];

#[test]
fn size_memory_from_rho() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&fjsync(dir.path(), &["size-memory", "--rho", "2", "--epsilon", "0.01"]));
    assert_eq!(v["result"]["k_max"], 6);
    let v = stdout_json(&fjsync(dir.path(), &["size-memory", "--rho", "2", "--epsilon", "0.9"]));
    assert_eq!(v["result"]["k_max"], 0);
}

#[test]
fn size_memory_from_simulation_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SIM.to_vec();
    args.extend(["--seed", "5", "--out", "sim"]);
    stdout_json(&fjsync(dir.path(), &args));
    let v = stdout_json(&fjsync(
        dir.path(),
        &["size-memory", "--sim-output", "sim", "--epsilon", "0.01", "--m-max", "20"],
    ));
    let plan = &v["result"]["plan"];
    let sum = plan["q_a_max"].as_u64().unwrap() + plan["q_b_max"].as_u64().unwrap() + plan["k_max"].as_u64().unwrap();
    assert_eq!(sum, 20);
    assert!(v["result"]["rho"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fjsync(dir.path(), &SIM);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    let out = fjsync(dir.path(), &["sweep", "--n-a", "1", "--n-b", "1", "--psi-a", "0.1", "--psi-b", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn domain_errors_exit_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = fjsync(
        dir.path(),
        &["simulate", "--lambda", "1", "--n-a", "1", "--mu-a", "1", "--n-b", "1", "--mu-b", "2", "--seed", "1"],
    );
    assert_eq!(out.status.code(), Some(1));
    let body: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(body["error"]["kind"], "params");
    let out = fjsync(dir.path(), &["size-memory", "--rho", "2", "--epsilon", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("net.cfg"), "# reference point\nlambda=0.3\nn_a=1\nn_b=1\nmu_a=0.8\nmu_b=0.8\nseed=9\n").unwrap();
    let v = stdout_json(&fjsync(
        dir.path(),
        &["simulate", "--config", "net.cfg", "--mu-b", "0.6", "--jobs", "2000", "--out", "run"],
    ));
    assert_eq!(v["result"]["lambda"], 0.3);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["args"]["params"]["mu_b"], 0.6);
    assert_eq!(manifest["seeds"][0], 9);
}

#[test]
fn default_directory_is_content_addressed() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SIM.to_vec();
    args.extend(["--seed", "3"]);
    let first = stdout_json(&fjsync(dir.path(), &args));
    let second = stdout_json(&fjsync(dir.path(), &args));
    assert_eq!(first["out_dir"], second["out_dir"]);
    let out_dir = first["out_dir"].as_str().unwrap();
    assert!(out_dir.starts_with("runs/simulate-"));
    *args.last_mut().unwrap() = "4";
    let third = stdout_json(&fjsync(dir.path(), &args));
    assert_ne!(first["out_dir"], third["out_dir"]);
    for name in ["in_trace.txt", "out_trace.txt", "sojourns.txt", "occupancy.csv", "summary.csv", "summary.json", "manifest.json"] {
        assert!(dir.path().join(out_dir).join(name).is_file(), "{name}");
    }
}

#[test]
fn test_flow_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SIM.to_vec();
    args.extend(["--seed", "8", "--out", "sim"]);
    stdout_json(&fjsync(dir.path(), &args));
    let v = stdout_json(&fjsync(
        dir.path(),
        &["test-flow", "--timestamps", "sim/out_trace.txt", "--rate", "0.3", "--out", "verdict"],
    ));
    for key in ["chi2", "st", "almost_poisson", "n", "rate"] {
        assert!(v["result"].get(key).is_some(), "{key}");
    }
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verdict/verdict.json")).unwrap()).unwrap();
    assert_eq!(saved, v["result"]);

    fs::write(dir.path().join("bad.txt"), "1.0\n2.0\n1.5\n").unwrap();
    let out = fjsync(dir.path(), &["test-flow", "--timestamps", "bad.txt", "--rate", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_output_does_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "sweep", "--n-a", "1,8", "--n-b", "1", "--psi-a", "0.2,0.7", "--psi-b", "0.3", "--jobs", "3000", "--seeds", "1,2",
    ];
    let mut one = base.to_vec();
    one.extend(["--threads", "1", "--out", "t1"]);
    let mut three = base.to_vec();
    three.extend(["--threads", "3", "--out", "t3"]);
    stdout_json(&fjsync(dir.path(), &one));
    stdout_json(&fjsync(dir.path(), &three));
    let a = fs::read(dir.path().join("t1/regions.csv")).unwrap();
    let b = fs::read(dir.path().join("t3/regions.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("n_a,n_b,psi_a,psi_b,seed,flow,chi2,st,verdict\n"));
    assert_eq!(text.lines().count(), 1 + 4 * 2 * 2);
}

#[test]
fn solve_ck_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&fjsync(
        dir.path(),
        &["solve-ck", "--lambda", "0.3", "--mu-a", "0.8", "--mu-b", "0.8", "--q-max", "60", "--out", "ck"],
    ));
    let d = v["result"]["delta_p_over_p"].as_f64().unwrap();
    assert!(d > 0.0 && d < 1.0);
    let grid = fs::read_to_string(dir.path().join("ck/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 61 * 61);

    stdout_json(&fjsync(dir.path(), &["curves", "--psi-b", "0.35", "--step", "0.25", "--out", "cv"]));
    let curves = fs::read_to_string(dir.path().join("cv/curves.csv")).unwrap();
    assert_eq!(curves.lines().next(), Some("psi_a,psi_b,delta_p_over_p"));
    assert_eq!(curves.lines().count(), 4);
}

#[test]
fn manifest_rerun_reproduces_solver_output() {
    let dir = tempfile::tempdir().unwrap();
    stdout_json(&fjsync(
        dir.path(),
        &["solve-ck", "--lambda", "1", "--mu-a", "2", "--mu-b", "1.5", "--q-max", "40", "--out", "a"],
    ));
    stdout_json(&fjsync(dir.path(), &["--from-manifest", "a/manifest.json", "--out", "b"]));
    for name in ["grid.csv", "summary.json", "manifest.json"] {
        assert_eq!(fs::read(dir.path().join("a").join(name)).unwrap(), fs::read(dir.path().join("b").join(name)).unwrap());
    }
    let out = fjsync(dir.path(), &["--from-manifest", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
}
