use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bench::output::{read_step_times, read_trace, rederive_reports, write_metrics, write_timing};
use bench::{simulate, write_outputs, Overrides};
use taskdyn::controllers::ControllerKind;
use taskdyn::sim::ScenarioConfig;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench")).args(args).output().expect("bench binary runs")
}

fn shortened(name: &str, duration: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::load(scenario(name)).unwrap();
    cfg.duration = duration;
    cfg
}

#[test]
fn posture_only_run_has_no_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench(&["run", scenario("posture_only").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = ScenarioConfig::load(scenario("posture_only")).unwrap();
    let reports = write_outputs(dir.path(), &simulate(&cfg, &[ControllerKind::Tsid]).unwrap()).unwrap();
    assert!(reports[0].rmse("posture").unwrap() < 1e-6);
}

#[test]
fn tsid_tracks_the_secondary_task_far_better_than_uf() {
    let cfg = ScenarioConfig::load(scenario("test1")).unwrap();
    let results = simulate(&cfg, &[ControllerKind::Tsid, ControllerKind::Uf]).unwrap();
    let tsid = bench::MetricsReport::from_result(&results[0]);
    let uf = bench::MetricsReport::from_result(&results[1]);
    assert!(uf.rmse("T2").unwrap() >= 10.0 * tsid.rmse("T2").unwrap());
}

#[test]
fn undamped_tsid_and_wbcf_report_the_same_errors() {
    let mut cfg = shortened("test1", 2.0);
    Overrides { lambda: Some(0.0), ..Default::default() }.apply(&mut cfg);
    let results = simulate(&cfg, &[ControllerKind::Tsid, ControllerKind::Wbcf]).unwrap();
    let a = bench::MetricsReport::from_result(&results[0]);
    let b = bench::MetricsReport::from_result(&results[1]);
    for (x, y) in a.tasks.iter().zip(&b.tasks) {
        assert_eq!(x.task, y.task);
        assert!((x.rmse - y.rmse).abs() < 1e-6, "{}: {} vs {}", x.task, x.rmse, y.rmse);
    }
}

#[test]
fn repeated_runs_write_identical_files() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let out = bench(&[
            "compare",
            scenario("test2").to_str().unwrap(),
            "--controllers",
            "tsid,uf",
            "--seed",
            "7",
            "--dt",
            "2e-3",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["metrics.csv", "trace.csv"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert!(!a.is_empty() && a == b, "{file} differs");
    }
}

#[test]
fn reports_are_rederived_exactly_from_saved_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shortened("test1", 0.5);
    let results = simulate(&cfg, &ControllerKind::ALL).unwrap();
    let reports = write_outputs(dir.path(), &results).unwrap();

    let trace = read_trace(std::fs::File::open(dir.path().join("trace.csv")).unwrap()).unwrap();
    let times = read_step_times(std::fs::File::open(dir.path().join("step_times.csv")).unwrap()).unwrap();
    let again = rederive_reports(&trace, &times);
    assert_eq!(again, reports);

    let mut metrics = Vec::new();
    write_metrics(&mut metrics, &again).unwrap();
    assert_eq!(metrics, std::fs::read(dir.path().join("metrics.csv")).unwrap());
    let mut timing = Vec::new();
    write_timing(&mut timing, &again).unwrap();
    assert_eq!(timing, std::fs::read(dir.path().join("timing.csv")).unwrap());
}

#[test]
fn zero_duration_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let results = simulate(&shortened("test1", 0.0), &[ControllerKind::Tsid]).unwrap();
    let reports = write_outputs(dir.path(), &results).unwrap();
    assert!(reports[0].tasks.is_empty());
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1);
    assert!(metrics.starts_with("taskdyn.metrics.v1,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();

    let single = bench(&["scaling", "--sizes", "8", "--out", out_dir]);
    assert_eq!(single.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&single.stderr).contains("need ≥3 sizes"));

    assert_eq!(bench(&["compare", scenario("test1").to_str().unwrap(), "--controllers", "tsid"]).status.code(), Some(1));
    assert_eq!(bench(&["run"]).status.code(), Some(1));
    assert_eq!(bench(&["run", "missing.toml", "--out", out_dir]).status.code(), Some(2));
    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "robot = 3\n").unwrap();
    assert_eq!(bench(&["run", broken.to_str().unwrap(), "--out", out_dir]).status.code(), Some(2));

    let posture = scenario("posture_only");
    let strict = dir.path().join("strict.toml");
    std::fs::write(&strict, "[[rmse]]\ntask = \"posture\"\nmax = 0.0\n[[rmse]]\ntask = \"T1\"\nmax = 1.0\n").unwrap();
    let failed = bench(&["run", posture.to_str().unwrap(), "--out", out_dir, "--assert", strict.to_str().unwrap()]);
    assert_eq!(failed.status.code(), Some(3));
    let stdout = String::from_utf8_lossy(&failed.stdout);
    assert!(stdout.contains("PASS rmse posture") && stdout.contains("FAIL rmse T1"), "{stdout}");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[[faster]]\nfast = \"tsid\"\n").unwrap();
    assert_eq!(bench(&["run", posture.to_str().unwrap(), "--out", out_dir, "--assert", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn scaling_writes_one_row_per_size_and_controller() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench(&["scaling", "--sizes", "4,6,8", "--controllers", "tsid,uf", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("taskdyn.scaling.v1,controller,n,"));
    assert!(lines[1].starts_with("taskdyn.scaling.v1,tsid,4,"));
}
