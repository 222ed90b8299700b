use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn write_config(dir: &TempDir, name: &str, json: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn run(verb: &str, config: &Path, extra: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mutclock"));
    cmd.arg(verb).arg("--config").arg(config).args(extra);
    match workers {
        Some(w) => cmd.env("MUTCLOCK_WORKERS", w),
        None => cmd.env_remove("MUTCLOCK_WORKERS"),
    };
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

const K1: &str = r#"{"model": {"d": 1, "volume": 100.0, "alpha": 1.0, "mu": [0.02], "k": 1}, "replicates": 100, "seed": 5}"#;

#[test]
fn simulate_single_stage() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "k1.json", K1);
    let out = dir.path().join("a.csv");
    let o = run("simulate", &cfg, &["--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&o);
    assert_eq!(report["finite"], 100);
    assert_eq!(report["timeouts"], 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("# mutclock "));
    assert!(csv.contains(&format!("config={}", report["config_hash"].as_str().unwrap())));
    assert_eq!(csv.lines().nth(1), Some("value"));
    let values: Vec<f64> = data_rows(&csv).iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 100);
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn simulate_is_byte_identical_across_runs_and_workers() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "k2.json",
        r#"{"model": {"d": 2, "volume": 100.0, "alpha": 1.0, "mu": [0.05, 0.2], "k": 2}, "replicates": 300, "seed": 9}"#,
    );
    let outputs: Vec<String> = [Some("1"), Some("4"), Some("8"), None, Some("1")]
        .iter()
        .map(|w| {
            let o = run("simulate", &cfg, &[], *w);
            assert_eq!(o.status.code(), Some(0));
            stdout(&o)
        })
        .collect();
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    let other = stdout(&run("simulate", &cfg, &["--seed", "10"], None));
    assert_ne!(outputs[0], other);
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "k1.json", K1);
    assert_eq!(run("simulate", &cfg, &["--replicates", "0"], None).status.code(), Some(1));
    let bad = write_config(&dir, "bad.json", r#"{"model": {"d": 1, "volume": 1.0, "alpha": 1.0, "mu": [1.0], "k": 1}, "colour": 3}"#);
    assert_eq!(run("simulate", &bad, &[], None).status.code(), Some(1));
    let neg = write_config(&dir, "neg.json", r#"{"model": {"d": 1, "volume": -1.0, "alpha": 1.0, "mu": [1.0], "k": 1}}"#);
    assert_eq!(run("classify", &neg, &[], None).status.code(), Some(1));
    let missing = dir.path().join("nope.json");
    assert_eq!(run("classify", &missing, &[], None).status.code(), Some(1));
    assert_eq!(run("law", &cfg, &["--case", "7"], None).status.code(), Some(1));
}

#[test]
fn classify_examples() {
    let dir = TempDir::new().unwrap();
    let c1 = write_config(&dir, "c1.json", r#"{"model": {"d": 1, "volume": 1e6, "alpha": 1e6, "mu": [1e-9, 1e-6], "k": 2}}"#);
    let r = json(&run("classify", &c1, &[], None));
    assert_eq!(r["case"], "k2-case1");
    assert!((r["ratios"]["r_fix_1"].as_f64().unwrap() - 1e-3).abs() < 1e-15);
    assert!((r["timescale"].as_f64().unwrap() - 1e-3).abs() < 1e-15);
    assert_eq!(r["law"]["kind"]["kind"], "exponential");

    let c11 = write_config(&dir, "c11.json", r#"{"model": {"d": 1, "volume": 1.0, "alpha": 1.0, "mu": [1.0, 1.0], "k": 2}, "z_samples": 500}"#);
    assert_eq!(json(&run("classify", &c11, &[], None))["case"], "k2-case11");

    let many = write_config(&dir, "m.json", r#"{"model": {"d": 1, "volume": 100.0, "alpha": 1.0, "mu": [1.0, 1.0, 1.0], "k": 3}}"#);
    assert_eq!(json(&run("classify", &many, &[], None))["case"], "k3plus-case2");

    let single = write_config(&dir, "s.json", K1);
    assert!(json(&run("classify", &single, &[], None))["margin"].is_null());

    // r_fix = 20, r_beta and r_sat both in the comparable band
    let amb = write_config(
        &dir,
        "amb.json",
        r#"{"model": {"d": 1, "volume": 4.47213595499958, "alpha": 1.0, "mu": [1.0, 2.2], "k": 2}}"#,
    );
    let o = run("classify", &amb, &[], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("r_sat"));
    // a narrower band separates the ratios
    let narrow = run("classify", &amb, &["--threshold", "5"], None);
    assert_eq!(json(&narrow)["case"], "k2-case6");
}

#[test]
fn law_examples() {
    let dir = TempDir::new().unwrap();
    let t_half = (3.0 * 2f64.ln()).cbrt();
    let c6 = write_config(
        &dir,
        "c6.json",
        &format!(r#"{{"model": {{"d": 1, "volume": 1e6, "alpha": 1.0, "mu": [1e-2, 1e-4], "k": 2}}, "grid": [0.0, {t_half}]}}"#),
    );
    let o = run("law", &c6, &["--case", "6"], None);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    assert_eq!(csv.lines().nth(1), Some("t,cdf"));
    let rows = data_rows(&csv);
    assert_eq!(rows[0], "0,0.000000000000");
    assert!(rows[1].ends_with(",0.500000000000"), "{}", rows[1]);

    let exp = write_config(&dir, "e.json", r#"{"model": {"d": 1, "volume": 1.0, "alpha": 1.0, "mu": [1.0], "k": 1}, "grid": [1.0]}"#);
    assert_eq!(data_rows(&stdout(&run("law", &exp, &["--case", "1"], None))), vec!["1,0.632120558829"]);

    let empty = write_config(&dir, "n.json", r#"{"model": {"d": 1, "volume": 1.0, "alpha": 1.0, "mu": [1.0], "k": 1}}"#);
    let out = dir.path().join("law.csv");
    let o = run("law", &empty, &["--case", "1", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(out).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(data_rows(&csv).is_empty());

    assert_eq!(run("law", &c6, &["--case", "12"], None).status.code(), Some(1));
    assert_eq!(run("law", &c6, &["--case", "six"], None).status.code(), Some(1));
}

#[test]
fn verify_examples() {
    let dir = TempDir::new().unwrap();
    let k1 = write_config(
        &dir,
        "k1.json",
        r#"{"model": {"d": 2, "volume": 50.0, "alpha": 1.0, "mu": [0.1], "k": 1}, "replicates": 10000, "seed": 3}"#,
    );
    let o = run("verify", &k1, &[], None);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["case"], "k1-case1");
    assert_eq!(r["pass"], true);
    assert!(r["ks"].as_f64().unwrap() < 0.0163);
    assert!((r["band"].as_f64().unwrap() - 0.016276).abs() < 1e-6);
    assert_eq!(r["n"], 10000);

    // a case 6 sample against the exponential law of case 4
    let c6 = write_config(
        &dir,
        "c6.json",
        r#"{"model": {"d": 1, "volume": 1e6, "alpha": 1.0, "mu": [1e-2, 1e-4], "k": 2}, "replicates": 500, "spatial_index": true}"#,
    );
    let o = run("verify", &c6, &["--case", "4"], None);
    assert_eq!(o.status.code(), Some(2));
    let r = json(&o);
    assert_eq!(r["pass"], false);
    assert!(r["ks"].as_f64().unwrap() > 0.1);

    assert_eq!(run("verify", &k1, &["--replicates", "0"], None).status.code(), Some(1));

    let amb = write_config(
        &dir,
        "amb.json",
        r#"{"model": {"d": 1, "volume": 4.47213595499958, "alpha": 1.0, "mu": [1.0, 2.2], "k": 2}, "replicates": 50, "z_samples": 200}"#,
    );
    assert_eq!(run("verify", &amb, &[], None).status.code(), Some(1));
    assert_eq!(run("verify", &amb, &["--case", "7"], None).status.code(), Some(1));
    let forced = run("verify", &amb, &["--case", "7", "--force-case"], None);
    assert!(matches!(forced.status.code(), Some(0) | Some(2)));
    assert_eq!(json(&forced)["case"], "k2-case7");
}

#[test]
fn timeout_budget_sets_exit_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "slow.json",
        r#"{"model": {"d": 1, "volume": 1.0, "alpha": 1.0, "mu": [1.0], "k": 1}, "replicates": 200, "t_max": 0.1}"#,
    );
    let o = run("simulate", &cfg, &[], None);
    assert_eq!(o.status.code(), Some(3));
    let csv = stdout(&o);
    assert!(csv.lines().next().unwrap().contains("timeout_warning=true"));
    assert!(data_rows(&csv).len() < 200);
}

#[test]
fn zdist_examples() {
    let dir = TempDir::new().unwrap();
    let single = write_config(&dir, "z1.json", r#"{"z": {"d": 1, "c": [1.0]}, "replicates": 5000, "seed": 1}"#);
    let out = dir.path().join("z1.csv");
    let o = run("zdist", &single, &["--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["checks"]["exponential"]["pass"], true);
    assert_eq!(data_rows(&std::fs::read_to_string(out).unwrap()).len(), 5000);

    let two = write_config(&dir, "z2.json", r#"{"z": {"d": 1, "c": [1.0, 1.0]}, "replicates": 5000, "seed": 2}"#);
    let out = dir.path().join("z2.csv");
    let r = json(&run("zdist", &two, &["--out", out.to_str().unwrap()], None));
    let sandwich = &r["checks"]["sandwich"];
    assert_eq!(sandwich["pass"], true);
    assert_eq!(sandwich["lower"], 2.0);
    assert_eq!(sandwich["upper"], 2.5);
    let small = &r["checks"]["small_t"];
    assert_eq!(small["t"], 0.2);
    assert!((small["upper"].as_f64().unwrap() - 0.008 / 3.0).abs() < 1e-15);
    assert_eq!(r["pass"], true);
}

#[test]
fn volume_reports_stage_one_moments() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "v.json",
        r#"{"model": {"d": 2, "volume": 400.0, "alpha": 1.0, "mu": [0.01], "k": 1},
            "replicates": 100, "volume": {"time": 1.0, "samples": 2000}}"#,
    );
    let o = run("volume", &cfg, &[], None);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    let (mean, se, exact) = (
        r["mean"].as_f64().unwrap(),
        r["se"].as_f64().unwrap(),
        r["exact_mean"].as_f64().unwrap(),
    );
    assert!((mean - exact).abs() < 4.0 * se, "{mean} {se} {exact}");
    assert!(r["variance"].as_f64().unwrap() > 0.0);
    assert!(r["variance_bound"].is_number());
    let beyond = write_config(
        &dir,
        "v2.json",
        r#"{"model": {"d": 2, "volume": 400.0, "alpha": 1.0, "mu": [0.01], "k": 1}, "volume": {"time": 1.0, "samples": 10, "stage": 2}}"#,
    );
    assert_eq!(run("volume", &beyond, &[], None).status.code(), Some(1));
}
