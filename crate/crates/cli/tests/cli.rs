use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hetnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetnet")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    fs::write(&path, r#"{"user_count": 12, "high_priority_count": 4, "rng_seed": 5}"#).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_report_and_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = small_config(dir.path());
    let o = hetnet(&["run", "--config", &cfg, "--algo", "iulp", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(report["algorithm"], "iulp");
    assert_eq!(report["rates_bps"].as_array().unwrap().len(), 12);
    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert!(rates.starts_with("user,bs,rate_bps\n"));
    assert_eq!(rates.lines().count(), 13);
}

#[test]
fn run_prints_json_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = hetnet(&["run", "--config", &cfg, "--algo", "msinr-mp", "--seed", "9"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["utility"].as_f64().unwrap().is_finite());
}

#[test]
fn explicit_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    fs::write(
        &path,
        r#"{
  "bs": [
    {"tier": "macro", "power_dbm": 46.0, "xy": [0.0, 0.0]},
    {"tier": "femto", "power_dbm": 30.0, "xy": [100.0, 0.0]}
  ],
  "users": [
    {"xy": [10.0, 0.0], "priority": 2.0},
    {"xy": [90.0, 0.0], "priority": 1.0},
    {"xy": [50.0, 20.0], "priority": 1.0}
  ],
  "noise_dbm": -104.0, "K": 55, "B_hz": 180000.0
}"#,
    )
    .unwrap();
    let o = hetnet(&["run", "--scenario", path.to_str().unwrap(), "--algo", "iulp+icupa"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&hetnet(&["run", "--algo", "ibapc"])), 2);
    assert_eq!(code(&hetnet(&["run", "--xi=-1"])), 2);
    assert_eq!(code(&hetnet(&["run", "--tmax", "0"])), 2);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"user_count": 10, "colour": "red"}"#).unwrap();
    assert_eq!(code(&hetnet(&["run", "--config", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&hetnet(&["run", "--scenario", "/nonexistent/scenario.json"])), 2);
    assert_eq!(code(&hetnet(&["emit", "--out", dir.path().to_str().unwrap()])), 2);
    assert_eq!(code(&hetnet(&["campaign", "--n", "0", "--out", dir.path().to_str().unwrap()])), 2);
}

#[test]
fn campaign_is_deterministic_and_emit_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = hetnet(&["campaign", "--config", &cfg, "--n", "3", "--seed", "11", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<String> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert!(names.contains(&"cdf_iulp.csv".to_string()));
    assert!(names.contains(&"gains_iulp+icupa.csv".to_string()));
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
    let before = fs::read(a.join("tiers.csv")).unwrap();
    for n in names.iter().filter(|n| n.ends_with(".csv")) {
        fs::remove_file(a.join(n)).unwrap();
    }
    assert_eq!(code(&hetnet(&["emit", "--out", a.to_str().unwrap()])), 0);
    assert_eq!(fs::read(a.join("tiers.csv")).unwrap(), before);
    assert_eq!(fs::read_to_string(a.join("gains_iulp.csv")).unwrap().lines().next(), Some("p,gain"));
    assert_eq!(fs::read_to_string(a.join("cdf_iulp.csv")).unwrap().lines().next(), Some("rate_bps,fraction"));
}

#[test]
fn single_realization_campaign_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("c");
    let o = hetnet(&["campaign", "--config", &cfg, "--algo", "dgp-mp", "--n", "1", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("campaign.json")).unwrap()).unwrap();
    let o = hetnet(&["run", "--config", &cfg, "--algo", "dgp-mp", "--seed", "4"]);
    let run: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["algorithms"][0]["mean_utility"], run["utility"]);
    assert_eq!(summary["algorithms"][0]["std_utility"], 0.0);
}

#[test]
fn verify_reports_every_suite() {
    let o = hetnet(&["verify", "--quick"]);
    let text = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7, "{text}");
    assert!(lines.iter().all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
    let any_fail = lines.iter().any(|l| l.starts_with("FAIL "));
    assert_eq!(code(&o), if any_fail { 4 } else { 0 });
}
