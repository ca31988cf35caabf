use std::process::{Command, Output};

fn stormrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stormrisk")).args(args).output().unwrap()
}

#[test]
fn every_subcommand_has_help() {
    for sub in [
        "default-config",
        "windfield",
        "ensemble",
        "failure-rates",
        "fail-dist",
        "critzone",
        "sweep-fit",
        "outage-synth",
        "outage-fit",
        "tables123",
    ] {
        let out = stormrisk(&[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn default_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = stormrisk(&["default-config"]);
    assert!(out.status.success());
    let path = dir.path().join("config.json");
    std::fs::write(&path, &out.stdout).unwrap();
    let again = stormrisk(&["default-config", "--config", path.to_str().unwrap()]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn non_positive_time_step_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for dt in ["0", "-1"] {
        let set = format!("times.dt_h={dt}");
        let out = stormrisk(&["windfield", "--set", &set, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).contains("times.dt_h"));
    }
}

#[test]
fn unknown_config_key_and_missing_file_fail() {
    let out = stormrisk(&["windfield", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = stormrisk(&["windfield", "--set", "grid.bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = stormrisk(&["outage-fit", "--obs", "/nonexistent/obs.csv"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn single_table_entry() {
    let dir = tempfile::tempdir().unwrap();
    let out = stormrisk(&[
        "tables123",
        "--set",
        "tables.vm_mps=[25]",
        "--set",
        "tables.rm_km=[20]",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("tables123.csv")).unwrap();
    assert!(csv.starts_with("# config_sha256="));
    let row = csv.lines().find(|l| l.starts_with("25,20,axisymmetric")).expect(&csv);
    let area: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!((area / 1.36e5 - 1.0).abs() < 0.05, "{area}");
}
