use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

fn seeqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seeqr")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// `y = 1 + 2 x + e` with `x` instrumented by `z`.
fn write_data(dir: &Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut text = String::from("y,x1,z1\n");
    for _ in 0..300 {
        let z: f64 = rng.sample(StandardNormal);
        let v: f64 = rng.sample(StandardNormal);
        let x = z + 0.5 * v;
        let e = 0.5 * v + rng.sample::<f64, _>(StandardNormal);
        text.push_str(&format!("{},{x},{z}\n", 1.0 + 2.0 * x + e));
    }
    let path = dir.join("data.csv");
    fs::write(&path, text).unwrap();
    path
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn fit_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let data = data.to_str().unwrap();
    let v = json(&ok(&seeqr(&["fit", "--data", data, "--add-intercept"])));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "fit");
    let beta: Vec<f64> = v["result"]["beta"].as_array().unwrap().iter().map(|b| b.as_f64().unwrap()).collect();
    assert_eq!(beta.len(), 2);
    assert!((beta[1] - 2.0).abs() < 0.3, "{beta:?}");
    assert!(v["result"]["h"].as_f64().unwrap() > 0.0);

    let out = dir.path().join("fit.csv");
    ok(&seeqr(&["fit", "--data", data, "--add-intercept", "--h", "0.5", "--format", "csv", "--out", out.to_str().unwrap()]));
    let csv = fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("coef,estimate\n0,"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bandwidth_modes() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let data = data.to_str().unwrap();
    for mode in ["plugin", "tiny", "huge", "1.5"] {
        let v = json(&ok(&seeqr(&["fit", "--data", data, "--add-intercept", "--h", mode])));
        assert!(v["result"]["beta"][1].as_f64().unwrap().is_finite(), "{mode}");
    }
    let v = json(&ok(&seeqr(&["bandwidth", "--data", data, "--add-intercept", "--q", "0.3"])));
    let sel = v["result"]["selected"].as_f64().unwrap();
    assert!(sel > 0.0);
    assert_eq!(v["result"]["fits"].as_array().unwrap().len(), 4);
}

#[test]
fn hypothesis_test_at_truth_and_far_away() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let data = data.to_str().unwrap();
    let near = json(&ok(&seeqr(&["test", "--data", data, "--add-intercept", "--beta0", "1,2", "--alpha", "0.05"])));
    let far = json(&ok(&seeqr(&["test", "--data", data, "--add-intercept", "--beta0", "1,5"])));
    assert!(near["result"]["s_n"].as_f64().unwrap() < far["result"]["s_n"].as_f64().unwrap());
    assert_eq!(far["result"]["reject_first_order"], true);
    assert!(near["result"]["c_alpha_star"].as_f64().unwrap() <= near["result"]["c_alpha"].as_f64().unwrap());
}

#[test]
fn config_values_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("data = {:?}\nadd_intercept = true\nq = 0.25\nh = 0.7\n", data.to_str().unwrap())).unwrap();
    let cfg = cfg.to_str().unwrap();
    let v = json(&ok(&seeqr(&["--config", cfg, "fit"])));
    assert_eq!(v["result"]["q"], 0.25);
    assert_eq!(v["result"]["h"], 0.7);
    let v = json(&ok(&seeqr(&["fit", "--config", cfg, "--q", "0.6"])));
    assert_eq!(v["result"]["q"], 0.6);

    fs::write(dir.path().join("bad.toml"), "colour = 1\n").unwrap();
    assert!(!seeqr(&["--config", dir.path().join("bad.toml").to_str().unwrap(), "fit"]).status.success());
}

#[test]
fn simulate_writes_draws_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let draws = dir.path().join("draws.csv");
    let summary = dir.path().join("summary.csv");
    let args = ["simulate", "--dgp", "H11", "--reps", "30", "--estimators", "see-plugin,iv", "--parallelism", "2"];
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--out", draws.to_str().unwrap(), "--summary", summary.to_str().unwrap()]);
    ok(&seeqr(&full));
    let d = fs::read_to_string(&draws).unwrap();
    assert!(d.starts_with("rep,estimator,coef,estimate,truth\n"));
    assert_eq!(d.lines().count(), 1 + 30 * 2 * 2);
    let s = fs::read_to_string(&summary).unwrap();
    assert_eq!(s.lines().count(), 1 + 2 * 2);
    // summary alone goes to standard output and matches the file
    assert_eq!(ok(&seeqr(&args)), s);

    let v = json(&ok(&seeqr(&["simulate", "--dgp", "scf2", "--reps", "5", "--estimators", "scf", "--format", "json"])));
    assert_eq!(v["result"]["seed_scheme"], "splitmix64-counter/chacha8");
    assert_eq!(v["result"]["q"], 0.25);
}

#[test]
fn power_curve_starts_at_alpha() {
    let out = ok(&seeqr(&[
        "power", "--dgp", "H11", "--reps", "200", "--alpha", "0.1", "--deltas", "0,8", "--methods", "see-fixed:1", "--parallelism", "2",
    ]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "delta,estimator,rejection_rate");
    assert_eq!(lines.len(), 3);
    let rate = |l: &str| l.rsplit(',').next().unwrap().parse::<f64>().unwrap();
    assert!((rate(lines[1]) - 0.1).abs() < 1e-12);
    assert!(rate(lines[2]) > 0.1);
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,x1\n1,2\n2,NaN\n").unwrap();
    let out = seeqr(&["fit", "--data", bad.to_str().unwrap(), "--add-intercept"]);
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("row 2"), "{msg}");

    for args in [
        vec!["fit"],
        vec!["simulate", "--dgp", "nope", "--reps", "3"],
        vec!["simulate", "--dgp", "H11", "--q", "1.5", "--reps", "3"],
        vec!["power", "--dgp", "H11", "--reps", "10"],
    ] {
        let out = seeqr(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"), "{args:?}");
    }
}
