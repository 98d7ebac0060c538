use dynvertex::cli::reproducible_part;
use serde_json::Value;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynvertex")).args(args).env_remove("DYNVERTEX_THREADS").output().unwrap()
}

fn doc(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("dynvertex-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn hand_forced_identity() {
    let out = run(&["verify-identity", "--form", "qhahn", "--k", "1", "--N", "1", "--x", "1", "--q", "0.4", "--J", "1", "--samples", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let d = doc(&out);
    let rep = &d["reports"][0];
    assert!((rep["diagnostics"]["lhs_exact"].as_f64().unwrap() + 0.6).abs() < 1e-10);
    assert!((rep["diagnostics"]["rhs_quadrature"]["value"].as_f64().unwrap() + 0.6).abs() < 1e-10);
    assert_eq!(d["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(d["config"]["spec"]["model"]["q"], 0.4);
}

#[test]
fn phi_family_default_grid() {
    let out = run(&["check-weights", "--family", "phi", "--grid", "default"]);
    assert_eq!(out.status.code(), Some(0));
    let d = doc(&out);
    for c in d["reports"][0]["checks"].as_array().unwrap() {
        assert!(c["residual"].as_f64().unwrap() < 1e-10, "{c}");
    }
}

#[test]
fn usage_and_config_errors_exit_two() {
    let out = run(&["check-weights", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&["asymptotics", "--experiment", "heat", "--config", r#"{"Tee": 1}"#]).status.code(), Some(2));
    assert_eq!(run(&["asymptotics", "--experiment", "heat", "--config", "/no/such/file.json"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--model", "general", "--steps", "3"]).status.code(), Some(2));
    assert_eq!(run(&["verify-identity", "--form", "qhahn", "--N", "2"]).status.code(), Some(2));
    let bad = Command::new(env!("CARGO_BIN_EXE_dynvertex")).args(["specfun", "verify", "--suite", "riemann"]).env("DYNVERTEX_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn failed_check_exits_one() {
    let out = run(&["asymptotics", "--experiment", "heat", "--config", r#"{"T": 16, "samples": 50, "tolerance": 0}"#, "--seed", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(doc(&out)["pass"], false);
}

#[test]
fn deterministic_reruns_are_identical() {
    let args = ["--deterministic", "simulate", "--model", "qhahn", "--steps", "6", "--samples", "300", "--seed", "11", "--observables", "current:1,current:2,particles", "--checkpoints", "3"];
    let (a, b) = (doc(&run(&args)), doc(&run(&args)));
    assert_eq!(reproducible_part(&a).to_string(), reproducible_part(&b).to_string());
    assert_eq!(a["thread_policy"], "deterministic-single");
    assert_eq!(a["runtime"]["threads"], 1);
    let par = doc(&run(&args[1..]));
    assert_eq!(par["reports"], a["reports"]);
    let est = a["reports"][0]["diagnostics"]["estimates"].as_array().unwrap();
    assert_eq!(est.len(), 6);
}

#[test]
fn simulate_csv_outputs() {
    let (out, dump) = (tmp("est.csv"), tmp("dump.csv"));
    let o = run(&[
        "simulate", "--model", "pep", "--config", r#"{"J": 2}"#, "--steps", "4", "--samples", "50", "--observables", "current:1", "--out",
        out.to_str().unwrap(), "--dump", dump.to_str().unwrap(), "--dump-count", "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let est = std::fs::read_to_string(&out).unwrap();
    assert!(est.starts_with("time,observable,mean,stderr,n_samples\n4,current:1,"), "{est}");
    let d = std::fs::read_to_string(&dump).unwrap();
    let mut lines = d.lines();
    assert_eq!(lines.next(), Some("trajectory,time,site,occupancy"));
    // first step of the (J; infinity)-PEP puts J particles at site 1
    assert_eq!(lines.next(), Some("0,1,1,2"));
    let c = tmp("corner.csv");
    let o = run(&["simulate", "--model", "corner", "--steps", "2", "--samples", "10", "--observables", "height:0", "--dump", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(&c).unwrap().starts_with("trajectory,time,x,height\n"));
}

#[test]
fn asymptotics_profile_csv() {
    let csv = tmp("heat.csv");
    let o = run(&["asymptotics", "--experiment", "heat", "--config", r#"{"T": 64, "samples": 100, "tolerance": 1.0}"#, "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("s,site,H,mean_m1,stderr_m1\n"), "{text}");
    assert_eq!(text.lines().count(), 4);
    let d = doc(&o);
    assert_eq!(d["config"]["experiment"], "heat_lln");
    assert_eq!(d["config"]["T"], 64);
}

#[test]
fn specfun_subcommands() {
    let o = run(&["specfun", "eval", "--fn", "q-pochhammer", "--args", "0.5,0.3,3"]);
    assert_eq!(o.status.code(), Some(0));
    let v = doc(&o);
    assert!((v["value"][0].as_f64().unwrap() - 0.5 * 0.85 * 0.955).abs() < 1e-15);
    let o = run(&["specfun", "eval", "--fn", "theta1", "--args", "0.1+0.2i", "--tau", "0+1i"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(run(&["specfun", "eval", "--fn", "theta1", "--args", "1,2"]).status.code(), Some(2));
    let o = run(&["specfun", "verify", "--suite", "riemann,rogers", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(doc(&o)["reports"].as_array().unwrap().len(), 2);
}

#[test]
fn verify_identity_presets() {
    let o = run(&["verify-identity", "--suite", "tiny"]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["verify-identity", "--suite", "tiny", "--q", "0.3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["verify-identity", "--form", "pep", "--J", "1", "--gamma", "3", "--x", "2,1", "--N", "3", "--samples", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}
