use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tactile-loop"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_default_config(dir: &Path) -> String {
    let path = dir.join("percussive.json");
    let text = serde_json::to_string_pretty(&tactile_loop::SessionConfig::default()).unwrap();
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn simulate_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_default_config(dir.path());
    let out = dir.path().join("run1");
    let o = cli(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["sensor.csv", "actuator.csv", "physics.csv", "meta.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("triggers: 1"), "{stdout}");
    assert!(stdout.contains("coupling_score: 0."), "{stdout}");
}

#[test]
fn missing_config_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["simulate", "--config", "/no/such/config.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/config.json"));
}

#[test]
fn zero_duration_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    let o = cli(&["simulate", "--set", "duration_s=0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let sensor = std::fs::read_to_string(out.join("sensor.csv")).unwrap();
    assert_eq!(sensor.lines().count(), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("undefined"));
}

#[test]
fn bad_field_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["simulate", "--set", "physics.m=-1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("physics.m"));
    let o = cli(&["simulate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_default_passes() {
    let o = cli(&["check"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}

#[test]
fn check_flags_sixteen_levels() {
    let o = cli(&["check", "--set", "actuator.levels=16"]);
    assert_eq!(o.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL level-census")), "{stdout}");
}

#[test]
fn check_flags_dim_light() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dim.json");
    std::fs::write(&path, r#"{"light": {"ambient": 0.1}}"#).unwrap();
    let o = cli(&["check", "--config", path.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL effective-steps")), "{stdout}");
}

#[test]
fn check_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tactile-loop"))
        .arg("check")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}
