use std::process::{Command, Output};

use serde_json::Value;

fn ergozeta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergozeta"))
        .args(args)
        .env_remove("ERGOZETA_THREADS")
        .output()
        .unwrap()
}

fn report(args: &[&str]) -> Value {
    let out = ergozeta(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn coboundary_report() {
    let r = report(&["coboundary", "--obs", "zeta-re", "--s", "0.5", "--cycle", "1/3"]);
    assert_eq!(r["command"], "coboundary");
    let sum = r["results"]["cycle_sum"].as_f64().unwrap();
    assert!((sum + 0.632184187171495).abs() < 1e-9);
    assert_eq!(r["results"]["nonzero"], true);
    for key in ["command", "config", "results", "diagnostics", "version"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["config"]["cycle"], "1/3");
    assert_eq!(r["diagnostics"]["flagged"], 0);
}

#[test]
fn spectrum_report() {
    let r = report(&["spectrum", "--m", "8"]);
    assert_eq!(r["results"]["lambda1"].as_f64(), Some(1.0));
    assert_eq!(r["results"]["nilpotent_index"], 8);
    assert_eq!(r["results"]["moduli"].as_array().unwrap().len(), 256);
}

#[test]
fn sigma2_digit_report() {
    let r = report(&["sigma2", "--obs", "digit", "--n", "1000"]);
    let v = r["results"]["value"].as_f64().unwrap();
    let se = r["results"]["se"].as_f64().unwrap();
    assert!((v - 0.25).abs() < 3.0 * se, "{v} ± {se}");
}

#[test]
fn reports_are_deterministic() {
    let args = ["clt", "--obs", "digit", "--n", "200", "--trials", "300", "--seed", "11"];
    let a = ergozeta(&args);
    let b = ergozeta(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let one: Value = serde_json::from_slice(&ergozeta(&[&args[..], &["--threads", "1"]].concat()).stdout).unwrap();
    let two: Value = serde_json::from_slice(&ergozeta(&[&args[..], &["--threads", "3"]].concat()).stdout).unwrap();
    assert_eq!(one["results"], two["results"]);
}

#[test]
fn usage_errors() {
    let out = ergozeta(&["clt", "--obs", "zeta-re", "--s", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("critical strip"));
    assert_eq!(ergozeta(&["clt", "--nope"]).status.code(), Some(1));
    assert_eq!(ergozeta(&["coboundary", "--obs", "zeta-re"]).status.code(), Some(1));
    assert_eq!(ergozeta(&["coboundary", "--cycle", "1/4"]).status.code(), Some(1));
    assert_eq!(ergozeta(&["spectrum", "--m", "15"]).status.code(), Some(1));
    assert_eq!(ergozeta(&["clt", "--obs", "digit", "--n", "50"]).status.code(), Some(1));
    assert_eq!(ergozeta(&["--help"]).status.code(), Some(0));
}

#[test]
fn low_s_warns_on_stderr() {
    let out = ergozeta(&["coboundary", "--obs", "zeta-abs", "--s", "0.25", "--cycle", "1/3"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["diagnostics"]["warnings"].as_array().unwrap().len(), 1);
    assert_eq!(r["results"]["observable"]["admissible"], false);
}

#[test]
fn config_file_and_output_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    let out = dir.path().join("report.csv");
    std::fs::write(&cfg, "# digit CLT\nobs = digit\nn = 200\ntrials = 150\nseed = 3\nformat = csv\n").unwrap();
    let status = ergozeta(&[
        "clt",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "120",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("normalized_sn"));
    assert_eq!(lines.count(), 120);

    std::fs::write(&cfg, "obs = digit\ncolour = blue\n").unwrap();
    let bad = ergozeta(&["clt", "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("colour"));
}

#[test]
fn threads_env_fallback() {
    let out = Command::new(env!("CARGO_BIN_EXE_ergozeta"))
        .args(["spectrum", "--m", "3"])
        .env("ERGOZETA_THREADS", "2")
        .output()
        .unwrap();
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["config"]["threads"], 2);
    let bad = Command::new(env!("CARGO_BIN_EXE_ergozeta"))
        .args(["spectrum", "--m", "3"])
        .env("ERGOZETA_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn other_subcommands_run() {
    let r = report(&["simulate", "--n", "5", "--trials", "2", "--seed", "1"]);
    assert_eq!(r["results"]["orbits"].as_array().unwrap().len(), 2);
    let r = report(&["simulate", "--x0", "-2", "--n", "3"]);
    assert_eq!(r["results"]["orbits"][0][1].as_f64(), Some(-0.75));
    let r = report(&["decay", "--obs", "angle", "--n", "2000", "--k-max", "4"]);
    assert_eq!(r["results"]["cov"].as_array().unwrap().len(), 5);
    let r = report(&["strong-law", "--obs", "digit", "--n", "1000", "--trials", "10"]);
    assert!(r["results"]["z"].as_f64().unwrap().abs() < 5.0);
    let r = report(&["growth", "--obs", "lorentz"]);
    assert_eq!(r["results"]["observable"]["pass"], true);
    let out = ergozeta(&["seminorm", "--obs", "cos", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("epsilon,value\n"));
}
