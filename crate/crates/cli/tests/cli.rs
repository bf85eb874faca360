use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
horizon = 6
x0 = [1.0, 2.0]
modes = ["h2", "hinf", "energy_regret", "pointwise_regret", "noncausal"]

[system.spring_damper]
c = 0.2
d = 0.1
ts = 0.1

[costs]
q = [[0.1, 0.0], [0.0, 0.1]]
r = [[1.0]]

[disturbance]
kind = "ellipsoid"
p = [[1.0, 0.0], [0.0, 1.0]]

[[scenarios]]
kind = "constant"
name = "constant"
value = [0.7071067811865476, 0.7071067811865476]

[[scenarios]]
kind = "random_ellipsoid"
name = "random"
seed = 3
count = 2
"#;

fn slsregret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slsregret")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn certificate(out: &Path, mode: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(mode).join("certificate.json")).unwrap()).unwrap()
}

#[test]
fn synth_writes_matrices_and_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = slsregret(&["synth", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    for mode in ["h2", "hinf", "energy_regret", "pointwise_regret"] {
        let phi = slsregret::io::read_matrix(out.join(mode).join("phi.txt")).unwrap();
        assert_eq!((phi.nrows(), phi.ncols()), (2 * 7 + 7, 2 + 2 * 6));
        assert!(out.join(mode).join("gain.txt").exists());
    }
    let c = certificate(&out, "energy_regret");
    for key in ["mode", "gamma_star", "lambda", "sigma_max", "solve_seconds", "max_psd_violation", "solver_status"] {
        assert!(c.get(key).is_some(), "missing {key}");
    }
    assert_eq!(c["solver_status"], "optimal");
    assert_eq!(c["lambda"].as_array().unwrap().len(), 1);
    assert_eq!(certificate(&out, "pointwise_regret")["lambda"].as_array().unwrap().len(), 7);
    assert!(certificate(&out, "noncausal")["j_star"].as_f64().unwrap() > 0.0);
    assert!(certificate(&out, "h2")["gamma_star"].is_null());
}

#[test]
fn empty_mode_list_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL.replace(r#"modes = ["h2", "hinf", "energy_regret", "pointwise_regret", "noncausal"]"#, "modes = []"),
    );
    let o = slsregret(&["synth", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("modes: at least one required"));
}

#[test]
fn bad_field_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("x0 = [1.0, 2.0]", "x0 = [1.0, 2.0, 3.0]"));
    let o = slsregret(&["synth", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("x0"));
}

#[test]
fn infeasible_constraint_exits_with_solver_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[constraints]\nhx = [[1.0, 0.0]]\n",
        SMALL.replace(
            r#"modes = ["h2", "hinf", "energy_regret", "pointwise_regret", "noncausal"]"#,
            r#"modes = ["h2"]"#
        )
    );
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = slsregret(&["synth", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

fn summary(out: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(out.join("summary.csv")).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn compare_table_layout_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = slsregret(&["compare", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "11"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let rows = summary(&a);
    assert_eq!(rows.len(), 3 * 5);
    let constant: Vec<_> = rows.iter().filter(|r| &r[0] == "constant").collect();
    let labels: Vec<&str> = constant.iter().map(|r| &r[1]).collect();
    assert_eq!(labels, ["H2", "H∞", "regret (energy)", "regret (pointwise)", "non-causal"]);
    assert_eq!(&constant[0][4], "—");
    assert_eq!(&constant[1][4], "—");
    let f = |s: &str| s.parse::<f64>().unwrap();
    assert!(f(&constant[3][4]) <= f(&constant[2][4]) * (1.0 + 1e-6));
    assert!(f(&constant[4][3]).abs() < 1e-6 * f(&constant[4][2]));
    for r in &rows {
        if &r[4] != "—" {
            assert!(f(&r[3]) <= f(&r[4]) * (1.0 + 1e-6) + 1e-6, "{r:?}");
        }
    }

    for rel in ["summary.csv", "cumulative/constant.csv", "cumulative/random_0001.csv", "states/h2/random_0000.csv"] {
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel}");
    }
    let table = slsregret(&["table", "--out", a.to_str().unwrap()]);
    assert!(table.status.success());
    assert_eq!(String::from_utf8(table.stdout).unwrap(), fs::read_to_string(a.join("summary.txt")).unwrap());
}

#[test]
fn zero_disturbance_from_rest_has_no_regret() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("x0 = [1.0, 2.0]", "x0 = [0.0, 0.0]")
        .replace("value = [0.7071067811865476, 0.7071067811865476]", "value = [0.0, 0.0]");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = slsregret(&[
        "compare",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "h2",
        "--mode",
        "energy_regret",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for r in summary(&out).iter().filter(|r| &r[0] == "constant") {
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0, "{r:?}");
    }
}

#[test]
fn simulate_writes_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = slsregret(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "h2",
        "--mode",
        "noncausal",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("trajectories/noncausal/constant.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,x0,x1,u0,w0,w1,stage_cost,cum_cost");
    assert_eq!(text.lines().count(), 1 + 7);
}
