use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dbrs_core::dissipation::{dissipation_eps_with, QuadratureOptions};
use dbrs_core::dynamics::integrate_full;
use dbrs_core::{parse_network, IntegratorOptions, TiltVector, Trajectory};
use serde_json::Value;

fn network(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../networks").join(name)
}

fn dbrs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dbrs")).args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = dbrs(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_reports_structure_and_detailed_balance() {
    let v = ok_json(&["validate", s(&network("three_species.json"))]);
    assert_eq!(v["tool"], "dbrs");
    assert_eq!(v["command"], "validate");
    let r = &v["report"];
    assert_eq!(r["m"], 1);
    assert_eq!(r["m_fa"], 2);
    assert_eq!(r["detailed_balance"]["verified"], true);
    let inputs = v["inputs"].as_object().unwrap();
    assert_eq!(inputs.len(), 1);
    assert_eq!(inputs.values().next().unwrap().as_str().unwrap().len(), 64);
}

#[test]
fn every_shipped_network_validates() {
    for name in ["three_species.json", "three_species_symmetric.json", "five_species.json", "autocatalytic.json", "autocatalytic_pair.json"] {
        let v = ok_json(&["validate", s(&network(name))]);
        assert_eq!(v["report"]["detailed_balance"]["verified"], true, "{name}");
    }
}

#[test]
fn simulate_from_equilibrium_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq.csv");
    let cstar = ok_json(&["validate", s(&network("three_species.json"))])["report"]["c_star"].clone();
    let c0: Vec<String> = cstar.as_array().unwrap().iter().map(|x| format!("{:.17e}", x.as_f64().unwrap())).collect();
    let st = dbrs(&["simulate", s(&network("three_species.json")), "--eps", "0.05", "--c0", &c0.join(","), "--T", "3", "--points", "6", "--out", s(&out)]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let tr = Trajectory::read_csv(std::fs::read(&out).unwrap().as_slice()).unwrap();
    assert_eq!(tr.len(), 7);
    let first = tr.initial_state().to_vec();
    for c in &tr.states {
        for (a, b) in c.iter().zip(&first) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{c:?} vs {first:?}");
        }
    }
    let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join("eq.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "simulate");
    assert_eq!(meta["report"]["completed"], true);
}

#[test]
fn simulate_then_dissipation_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let traj_path = dir.path().join("traj.csv");
    let net_path = network("three_species.json");
    let st = dbrs(&["simulate", s(&net_path), "--eps", "0.1", "--c0", "10,4,0", "--T", "2", "--out", s(&traj_path)]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));

    let net = parse_network(&std::fs::read_to_string(&net_path).unwrap()).unwrap();
    let local = integrate_full(&net, 0.1, &[10.0, 4.0, 0.0], 2.0, &IntegratorOptions::with_tolerances(1e-8, 1e-10)).unwrap();
    let written = Trajectory::read_csv(std::fs::read(&traj_path).unwrap().as_slice()).unwrap();
    assert_eq!(written.times, local.times);
    assert_eq!(written.states, local.states);

    let v = ok_json(&["dissipation", s(&net_path), "--traj", s(&traj_path), "--eps", "0.1"]);
    let expected = dissipation_eps_with(&local, &net, 0.1, &TiltVector::zero(3), &QuadratureOptions::default(), None).unwrap();
    assert_eq!(v["report"], serde_json::to_value(&expected).unwrap());
}

#[test]
fn ufec_finds_the_boundary_equilibrium() {
    let v = ok_json(&["ufec", s(&network("autocatalytic.json"))]);
    let r = &v["report"];
    assert_eq!(r["holds"], false);
    let states: Vec<&Value> = r["counterexamples"].as_array().unwrap().iter().map(|c| &c["state"]).collect();
    assert!(states.iter().any(|st| st.as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0))));
}

#[test]
fn reduce_project_sweep_and_recovery_run() {
    let dir = tempfile::tempdir().unwrap();
    let net = network("three_species.json");
    let q = dir.path().join("q.csv");

    let st = dbrs(&["reduce", s(&net), "--c0", "10,4,0", "--T", "1", "--points", "8", "--out", s(&q)]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let text = std::fs::read_to_string(&q).unwrap();
    assert!(text.starts_with("t,q1,q2,psi1,psi2,psi3"));
    assert_eq!(text.lines().count(), 10);

    let st = dbrs(&["project", s(&net), "--c0", "10,4,0.5", "--T", "1", "--points", "4", "--well-prepare"]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(String::from_utf8_lossy(&st.stdout).starts_with("t,c1,c2,c3"));

    let v = ok_json(&["sweep", s(&net), "--c0", "10,4,0", "--T", "1", "--eps-list", "0.1,0.05", "--format", "json"]);
    assert_eq!(v["command"], "sweep");

    let v = ok_json(&["recovery", s(&net), "--qpath", s(&q), "--eps-list", "0.1,0.01"]);
    assert_eq!(v["report"]["jensen"]["jensen_holds"], true);

    let v = ok_json(&["dissipation", s(&net), "--traj", s(&q), "--limit"]);
    assert_eq!(v["report"]["scale"], "limit");
}

#[test]
fn exit_codes() {
    let net = network("three_species.json");
    assert_eq!(dbrs(&["simulate", s(&net), "--c0", "1,2,3"]).status.code(), Some(2));
    assert_eq!(dbrs(&["simulate", s(&net), "--eps", "0", "--c0", "1,2,3", "--T", "1"]).status.code(), Some(2));
    assert_eq!(dbrs(&["dissipation", s(&net), "--traj", "x.csv"]).status.code(), Some(2));

    assert_eq!(dbrs(&["validate", "/nonexistent/net.json"]).status.code(), Some(3));
    let bad = dbrs(&["simulate", s(&net), "--eps", "0.1", "--c0", "1,2", "--T", "1"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));

    let out = dbrs(&["simulate", s(&net), "--eps", "1e-300", "--c0", "1,2,3", "--T", "1e300", "--max-step", "1e-300"]);
    assert_eq!(out.status.code(), Some(4));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "integration");
    assert_eq!(err["tool"], "dbrs");
}
