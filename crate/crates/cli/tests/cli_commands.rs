use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn wavecert(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_wavecert")).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn file(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("{e}: {text}"))
}

#[test]
fn certify_names_phi0_for_large_chi() {
    let dir = TempDir::new().unwrap();
    let cfg = file(&dir, "c.json", r#"{"problem": {"n": 1, "k": 1, "g1": 0, "delta": 0.001}, "vars": {"chi": 0.6}}"#);
    let r = wavecert(&["certify", "--config", s(&cfg)]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    let v = json(&r.stdout);
    assert_eq!(v["feasible"], false);
    assert_eq!(v["failing"], "phi0");
    assert!(v["margins"]["phi0"].as_f64().unwrap() < 0.0);
}

#[test]
fn certify_fills_multipliers_by_line_search() {
    let dir = TempDir::new().unwrap();
    let cfg = file(
        &dir,
        "c.json",
        r#"{"problem": {"n": 1, "k": 1, "g1": 0.1, "delta": 0.1}, "vars": {"chi": 0.1805, "lambda0": 1e-6}}"#,
    );
    let r = wavecert(&["certify", "--config", s(&cfg)]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    let v = json(&r.stdout);
    assert!(v["vars"]["lambda1"].as_f64().unwrap() > 0.0);
    assert!((v["alpha"].as_f64().unwrap() - 0.639).abs() < 1e-3);
}

#[test]
fn certify_rejects_hopeless_nonlinearity() {
    let dir = TempDir::new().unwrap();
    let cfg = file(&dir, "c.json", r#"{"problem": {"n": 1, "k": 1, "g1": 10, "delta": 0.1}, "vars": {"chi": 0.2}}"#);
    let r = wavecert(&["certify", "--config", s(&cfg)]);
    assert_eq!(r.code, 2);
    assert_eq!(json(&r.stdout)["failing"], "psi2");
}

#[test]
fn min_time_certificate_passes_certify_unchanged() {
    let dir = TempDir::new().unwrap();
    let mt = file(&dir, "mt.json", r#"{"mode": "min-time", "problem": {"n": 1, "k": 1, "g1": 0.05, "delta": 0.02}}"#);
    let cert = dir.path().join("cert.json");
    let r = wavecert(&["min-time", "--config", s(&mt), "--out", s(&cert)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = json(&r.stdout);
    let written = std::fs::read_to_string(&cert).unwrap();
    assert_eq!(json(&written), v["certificate"]);

    let cc = file(&dir, "cc.json", r#"{"problem": {"n": 1, "k": 1, "g1": 0.05}}"#);
    let r = wavecert(&["certify", "--config", s(&cc), "--vars", s(&cert)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(json(&r.stdout), json(&written));

    let other = file(&dir, "other.json", r#"{"problem": {"n": 1, "k": 2, "g1": 0.05}}"#);
    assert_eq!(wavecert(&["certify", "--config", s(&other), "--vars", s(&cert)]).code, 1);
}

#[test]
fn floats_print_with_seventeen_digits() {
    let dir = TempDir::new().unwrap();
    let mt = file(&dir, "mt.json", r#"{"problem": {"n": 1, "k": 1, "g1": 0, "delta": 0.001}}"#);
    let r = wavecert(&["min-time", "--config", s(&mt)]);
    let line = r.stdout.lines().find(|l| l.contains("\"t_star\"")).unwrap();
    let num = line.split(':').nth(1).unwrap().trim().trim_end_matches(',');
    let mantissa = num.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{num}");
}

#[test]
fn infeasible_min_time_exits_two() {
    let dir = TempDir::new().unwrap();
    let mt = file(
        &dir,
        "mt.json",
        r#"{"problem": {"n": 1, "k": 1, "g1": 10, "delta": 0.1}, "search": {"tstar_max": 20}}"#,
    );
    let r = wavecert(&["min-time", "--config", s(&mt)]);
    assert_eq!(r.code, 2);
    let v = json(&r.stdout);
    assert_eq!(v["feasible"], false);
    assert!(v["reason"].as_str().is_some());
}

#[test]
fn config_errors_exit_one_with_location() {
    let dir = TempDir::new().unwrap();
    let bad = file(&dir, "bad.json", "{\n  \"problem\": {\n    \"n\": 1,,\n  }\n}");
    let r = wavecert(&["min-time", "--config", s(&bad)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("bad.json:3:"), "{}", r.stderr);

    let unknown = file(&dir, "u.json", r#"{"problem": {"n": 1, "k": 1, "g1": 0, "dleta": 0.1}}"#);
    let r = wavecert(&["min-time", "--config", s(&unknown)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("dleta"), "{}", r.stderr);

    let mode = file(&dir, "m.json", r#"{"mode": "sweep", "problem": {"n": 1, "k": 1, "g1": 0}}"#);
    assert_eq!(wavecert(&["min-time", "--config", s(&mode)]).code, 1);

    let missing = dir.path().join("nope.json");
    assert_eq!(wavecert(&["min-time", "--config", s(&missing)]).code, 1);

    let no_d = file(&dir, "r.json", r#"{"problem": {"n": 1, "k": 1, "g1": 0.1, "delta": 0.1}}"#);
    assert_eq!(wavecert(&["regional", "--config", s(&no_d)]).code, 1);
}

#[test]
fn sweep_argument_checks() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o.csv");
    let empty = file(&dir, "e.json", r#"{"problems": []}"#);
    assert_eq!(wavecert(&["sweep", "--config", s(&empty), "--jobs", "2", "--out", s(&out)]).code, 1);
    let one = file(&dir, "o.json", r#"{"problems": [{"n": 1, "k": 1, "g1": 0, "delta": 0.01}]}"#);
    assert_eq!(wavecert(&["sweep", "--config", s(&one), "--jobs", "0", "--out", s(&out)]).code, 1);
    assert_eq!(wavecert(&["sweep", "--config", s(&one), "--jobs", "2", "--out", s(&out)]).code, 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("n,k,g1,delta,t_star,chi,lambda0,lambda1,lambda2,alpha,beta,d0,feasible\n"));
    assert!(csv.lines().nth(1).unwrap().ends_with(",,true"));
}

fn preset_config(dir: &TempDir, horizon: f64, extra: &str) -> PathBuf {
    file(
        dir,
        "sim.json",
        &format!(
            r#"{{"problem": {{"n": 1, "k": 1, "g1": 0.2}},
                "sim": {{"horizon": {horizon}, "nonlinearity": {{"kind": "quadratic", "c": 0.1}},
                         "initial": {{"kind": "preset", "name": "paper-example2"}}{extra}}}}}"#
        ),
    )
}

#[test]
fn simulate_is_deterministic_and_well_formed() {
    let dir = TempDir::new().unwrap();
    let snap = dir.path().join("snap.csv");
    let cfg = preset_config(&dir, 1.0, &format!(r#", "snapshot": "{}""#, s(&snap)));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(wavecert(&["simulate", "--config", s(&cfg), "--out", s(&a)]).code, 0);
    assert_eq!(wavecert(&["simulate", "--config", s(&cfg), "--out", s(&b)]).code, 0);
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let text = String::from_utf8(ta).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,E,V,trace_1.000000"));
    assert_eq!(lines.count(), 201);
    let snap = std::fs::read_to_string(&snap).unwrap();
    assert!(snap.starts_with("x,z,zt\n"));
    assert_eq!(snap.lines().count(), 202);
}

#[test]
fn two_dimensional_trace_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = file(
        &dir,
        "s2.json",
        r#"{"problem": {"n": 2, "k": 1, "g1": 0},
            "sim": {"dim": 2, "points": 21, "horizon": 0.5,
                    "initial": {"kind": "fourier-sine", "z0": [1.0, 0.2], "z1": [0.0]}}}"#,
    );
    let out = dir.path().join("t2.csv");
    let r = wavecert(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(&out).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 3 + 2 * 21 - 3);
    assert_eq!(header[3], "trace_0.050000_1.000000");
    assert_eq!(*header.last().unwrap(), "trace_1.000000_1.000000");

    let cfg1 = preset_config(&dir, 0.5, "");
    let run = dir.path().join("r.json");
    let r = wavecert(&["recover", "--config", s(&cfg1), "--trace", s(&out), "--iterations", "2", "--out", s(&run)]);
    assert_eq!(r.code, 1, "a 2-D trace must not feed a 1-D recovery");
}

#[test]
fn recover_splits_short_and_long_horizons() {
    for (horizon, code) in [(2.1, 0), (1.8, 2)] {
        let dir = TempDir::new().unwrap();
        let cfg = preset_config(&dir, horizon, "");
        let trace = dir.path().join("t.csv");
        let run = dir.path().join("r.json");
        assert_eq!(wavecert(&["simulate", "--config", s(&cfg), "--out", s(&trace)]).code, 0);
        let r = wavecert(&["recover", "--config", s(&cfg), "--trace", s(&trace), "--iterations", "10", "--out", s(&run)]);
        assert_eq!(r.code, code, "T={horizon}: {}", r.stderr);
        let v = json(&std::fs::read_to_string(&run).unwrap());
        assert_eq!(v["iterations"].as_array().unwrap().len(), 10);
        assert_eq!(v["converged"], code == 0);
        let first = &v["iterations"][0];
        for key in ["m", "E_b_t0", "V_b_t0", "ratio"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }
}
