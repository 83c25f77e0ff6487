//! End-to-end harness behavior: a config file drives the binary, identical
//! configurations reproduce the CSV byte for byte, every scenario contributes
//! rows even under a tight eigensolver budget, and bad inputs are refused
//! with real errors instead of half-finished runs.

use heatlab_cli::config::{apply_overrides, parse_config, Overrides, RunConfig, Scenario, ALL_SCENARIOS};
use heatlab_cli::run;
use std::path::PathBuf;
use std::process::Command;

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("heatlab-cli-tests").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Small square-only configuration that exercises the cheap scenarios.
fn small_cfg(out: PathBuf, scenarios: Vec<Scenario>) -> RunConfig {
    RunConfig {
        domains: vec![heatlab_cli::config::Domain::Square],
        levels: (2, 3),
        scenarios,
        out,
        cache_dir: None,
        ..RunConfig::default()
    }
}

#[test]
fn the_binary_runs_a_config_file_end_to_end() {
    let dir = scratch_dir("binary");
    let out = dir.join("report.csv");
    let config = dir.join("run.conf");
    std::fs::write(
        &config,
        "# two coarse square levels, assembly and spectrum only\n\
         domain = square\n\
         levels = 2..3\n\
         scenarios = assembly-check, spectrum\n",
    )
    .unwrap();

    let status = Command::new(env!("CARGO_BIN_EXE_heatlab"))
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(status.status.success(), "binary failed: {stdout}");
    assert!(stdout.contains("result: OK"), "summary missing verdict: {stdout}");

    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("# run_unix="));
    assert!(csv.lines().nth(1).unwrap().starts_with("scenario,domain,level"));
    assert!(csv.lines().any(|l| l.starts_with("spectrum,square,3,")));
}

#[test]
fn a_bad_config_file_exits_with_code_two() {
    let dir = scratch_dir("badconfig");
    let config = dir.join("broken.conf");
    std::fs::write(&config, "levels = 9..2\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_heatlab"))
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn two_identical_runs_agree_byte_for_byte() {
    let dir = scratch_dir("determinism");
    let scenarios =
        vec![Scenario::AssemblyCheck, Scenario::Spectrum, Scenario::Deltainv, Scenario::Projections];
    let a = run::run(&small_cfg(dir.join("a.csv"), scenarios.clone())).unwrap();
    let b = run::run(&small_cfg(dir.join("b.csv"), scenarios)).unwrap();
    assert_eq!(a.csv_body(), b.csv_body(), "reruns must reproduce the CSV body exactly");
    // the bodies on disk differ only in the timestamp comment
    let body = |p: PathBuf| {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(body(dir.join("a.csv")), body(dir.join("b.csv")));
}

#[test]
fn scenario_order_in_the_config_does_not_matter() {
    let dir = scratch_dir("order");
    let forward = vec![Scenario::AssemblyCheck, Scenario::Deltainv];
    let backward = vec![Scenario::Deltainv, Scenario::AssemblyCheck, Scenario::Deltainv];
    let a = run::run(&small_cfg(dir.join("f.csv"), forward)).unwrap();
    let b = run::run(&small_cfg(dir.join("b.csv"), backward)).unwrap();
    assert_eq!(a.csv_body(), b.csv_body());
}

#[test]
fn every_scenario_reports_rows_under_a_tight_cap() {
    let dir = scratch_dir("allscenarios");
    let mut cfg = small_cfg(dir.join("all.csv"), ALL_SCENARIOS.to_vec());
    cfg.cap = 300;
    let report = run::run(&cfg).unwrap();
    assert!(report.exit_ok(), "hard failures: {:?}", report.hard_failures);
    for sc in ALL_SCENARIOS {
        assert!(
            report.records.iter().any(|r| r.scenario == sc.name()),
            "scenario {} produced no rows",
            sc.name()
        );
    }
    // the cap shows up as explicit skip rows, never as silent holes
    assert!(report.records.iter().all(|r| !r.value.is_nan() || r.aux.starts_with("skipped:")));
}

#[test]
fn unknown_scenario_overrides_are_rejected() {
    let cfg = parse_config("domain = square\n").unwrap();
    let overrides =
        Overrides { scenarios: vec!["spectral-disco".into()], ..Overrides::default() };
    assert!(apply_overrides(cfg, &overrides).is_err());
}
