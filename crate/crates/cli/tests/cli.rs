use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pestov_lab::config::RunConfig;
use pestov_lab::report::Report;
use proptest::prelude::*;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pestov-lab"));
    c.env_remove("PESTOV_LAB_SEED");
    c
}

fn run(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut c = bin();
    c.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let p = dir.join("run.toml");
        fs::write(&p, text).unwrap();
        c.arg("--config").arg(p);
    }
    c.output().unwrap()
}

fn report(dir: &Path) -> Report {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "sweep.points = 6\nsweep.draws = 50\n";

#[test]
fn structural_suite_on_the_flat_torus_passes() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["check", "--suite", "structural", "--model", "flat_torus", "--dim", "2"], Some(SMALL), d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(d.path());
    let names: Vec<&str> = r.checks.iter().map(|c| c.check.as_str()).collect();
    assert_eq!(
        names,
        ["structural_VV", "structural_VB", "structural_BB", "structural_XV", "structural_XH", "structural_HV"]
    );
    assert!(r.checks.iter().all(|c| c.pass));
    assert_eq!(r.provenance.config_hash, r.config.hash());
    let csv = fs::read_to_string(d.path().join("out/summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn small_count_is_rejected_by_key() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["check", "--count", "999"], None, d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mc.count"));
}

#[test]
fn global_on_the_ball_is_unsupported() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["check", "--suite", "global", "--model", "hyperbolic_ball", "--dim", "3"], None, d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported model for global checks"));
}

#[test]
fn malformed_config_reports_the_line() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["check"], Some("seed = 1\nsweep.points = \"many\"\n"), d.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 2"), "{e}");
    let o = run(&["check"], Some("sweep.pionts = 3\n"), d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pionts"));
}

#[test]
fn short_ladder_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["convergence"], Some("convergence.ladder = [0.1, 0.05]\n"), d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("convergence.ladder"));
}

#[test]
fn fd_ladder_reaches_second_order() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["convergence", "--model", "round_sphere", "--dim", "2"], None, d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("out/convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("rung,h,residual,stderr,slope"));
    let slope: f64 = lines.next().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(slope >= 1.9, "{slope}");
}

#[test]
fn zero_time_step_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["flow"], Some("flow.dt = 0.0\n"), d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("flow.dt"));
}

fn flow_rows(dir: &Path) -> (Vec<Vec<f64>>, Vec<String>) {
    let text = fs::read_to_string(dir.join("out/flow.csv")).unwrap();
    let mut rows = Vec::new();
    let mut comments = Vec::new();
    for line in text.lines().skip(1) {
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
        } else {
            rows.push(line.split(',').map(|v| v.parse().unwrap()).collect());
        }
    }
    (rows, comments)
}

#[test]
fn torus_flow_is_linear_mod_periods() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "model.kind = \"flat_torus\"\nmodel.dim = 2\nflow.t = 10.0\nflow.dt = 0.01\nflow.x = [1.0, 2.0]\nflow.a = [0.6, -0.8, 0.8, 0.6]\n";
    let o = run(&["flow"], Some(cfg), d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (rows, comments) = flow_rows(d.path());
    assert_eq!(rows.len(), 1001);
    for r in &rows {
        let t = r[0];
        let tau = std::f64::consts::TAU;
        // w e_1 = (0.6, 0.8)
        assert!(((1.0 + 0.6 * t).rem_euclid(tau) - r[2]).abs() < 1e-9);
        assert!(((2.0 + 0.8 * t).rem_euclid(tau) - r[3]).abs() < 1e-9);
        for (v, e) in r[4..].iter().zip([0.6, -0.8, 0.8, 0.6]) {
            assert!((v - e).abs() < 1e-14);
        }
    }
    assert!(comments[0].starts_with("final"));
}

#[test]
fn sphere_great_circle_closes() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["flow", "--model", "round_sphere", "--dim", "3"], None, d.path());
    assert_eq!(o.status.code(), Some(0));
    let (rows, _) = flow_rows(d.path());
    let (first, last) = (&rows[0], rows.last().unwrap());
    assert!((last[0] - std::f64::consts::TAU).abs() < 1e-12);
    let dist = first.iter().zip(last).skip(1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(dist < 1e-6, "{dist}");
}

#[test]
fn chart_exit_writes_partial_trajectory() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["flow", "--model", "hyperbolic_ball", "--dim", "2"], Some("flow.t = 50.0\nflow.dt = 0.01\n"), d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("chart domain"));
    let (rows, comments) = flow_rows(d.path());
    assert!(rows.len() > 10 && rows.last().unwrap()[0] < 50.0);
    assert!(comments.iter().any(|c| c.starts_with("error")));
}

#[test]
fn seed_precedence() {
    let d = tempfile::tempdir().unwrap();
    let mut c = bin();
    let cfg = d.path().join("c.toml");
    fs::write(&cfg, "seed = 5\nsuite = \"pointwise\"\nsweep.points = 2\n").unwrap();
    let o = c
        .args(["check", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(d.path().join("out"))
        .env("PESTOV_LAB_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(report(d.path()).config.seed, 11);
    let o = bin()
        .args(["check", "--seed", "13", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(d.path().join("out"))
        .env("PESTOV_LAB_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(d.path()).config.seed, 13);
}

#[test]
fn written_config_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["check", "--suite", "curvature", "--model", "perturbed_hyperbolic", "--dim", "3"], Some(SMALL), d.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(d.path());
    let again = RunConfig::from_toml(&r.config.to_toml()).unwrap();
    assert_eq!(again, r.config);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Exit 0 exactly when every record passes, 1 otherwise, for
    /// tolerances on both sides of the measured residuals.
    #[test]
    fn exit_code_follows_the_records(exp in -18i32..-8, seed in 0u64..1000) {
        let d = tempfile::tempdir().unwrap();
        let cfg = format!(
            "suite = \"structural\"\nseed = {seed}\nmodel.kind = \"round_sphere\"\nmodel.dim = 2\nsweep.points = 3\ntolerance.structural = 1e{exp}\n"
        );
        let o = run(&["check"], Some(&cfg), d.path());
        let r = report(d.path());
        let all = r.checks.iter().all(|c| c.pass);
        for c in &r.checks {
            prop_assert_eq!(c.pass, c.residual <= c.tolerance);
        }
        prop_assert_eq!(o.status.code(), Some(if all { 0 } else { 1 }));
    }
}
