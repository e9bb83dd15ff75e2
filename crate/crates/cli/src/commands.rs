//! The `check`, `convergence` and `flow` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::time::Instant;

use anyhow::{bail, Context};
use pestov_core::frame_bundle::{frame_distance, frame_flow, frame_flow_trajectory};
use pestov_core::jets::{DeriveMethod, FdConfig};
use pestov_core::linalg::Mat;
use pestov_core::measure::{loglog_slope, sample_frame, stream_rng, RNG_ALGORITHM};
use pestov_core::operators::testfn::{InvarianceClass, TestFunctionFamily, TestFunctionKind};
use pestov_core::operators::{structural_residual, Structural};
use pestov_core::pestov::{
    associated_pestov_residual, global_pestov_residual, hyperbolic_example_check, image_constraint_sweep,
    pointwise_sweep, r_sm_sweep, structural_sweep, sweep_function_seed, IdentityCheck,
};
use pestov_core::{ChartPoint, FramePoint, MetricModel, ModelKind};

use crate::config::{LadderKind, RunConfig, Suite};
use crate::report::{Provenance, Report, SeedUse};

/// Exit status of a command that ran to completion.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;

/// Fixed offsets separating the seeds of the individual suites.
const STRUCTURAL_SEED: u64 = 0;
const POINTWISE_SEED: u64 = 1_000;
const CURVATURE_SEED: u64 = 2_000;
const GLOBAL_SEED: u64 = 3_000;
const ASSOCIATED_SEED: u64 = 4_000;

/// Output of a suite run before it is turned into a report.
#[derive(Debug, Default)]
pub struct SuiteRun {
    pub checks: Vec<IdentityCheck>,
    pub skipped: Vec<String>,
    pub seeds: Vec<SeedUse>,
}

impl SuiteRun {
    fn push(&mut self, c: IdentityCheck, seed: u64) {
        self.seeds.push(SeedUse {
            check: c.name.clone(),
            seed,
        });
        self.checks.push(c);
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(f))
}

fn global_function(model: &MetricModel, degree: usize, seed: u64) -> TestFunctionFamily {
    TestFunctionFamily::random(TestFunctionKind::for_model(model), model.dim, degree, seed)
}

/// Run the configured suite and collect the checks in a fixed order.
pub fn run_suite(cfg: &RunConfig) -> anyhow::Result<SuiteRun> {
    let model = &cfg.model;
    let seed = cfg.seed;
    let tol = &cfg.tolerance;
    let wants = |s: Suite| cfg.suite == s || cfg.suite == Suite::All;
    let mut run = SuiteRun::default();

    if wants(Suite::Structural) {
        let s = seed.wrapping_add(STRUCTURAL_SEED);
        for which in Structural::ALL {
            run.push(
                structural_sweep(model, which, s, cfg.sweep.points, cfg.sweep.degree, tol.structural)?,
                s,
            );
        }
    }
    if wants(Suite::Pointwise) {
        let s = seed.wrapping_add(POINTWISE_SEED);
        run.push(pointwise_sweep(model, s, cfg.sweep.points, cfg.sweep.degree, tol.pointwise)?, s);
    }
    if wants(Suite::Curvature) {
        let s = seed.wrapping_add(CURVATURE_SEED);
        run.push(r_sm_sweep(model, s, cfg.sweep.draws, tol.curvature)?, s);
        run.push(image_constraint_sweep(model, s, cfg.sweep.draws, tol.image)?, s);
        if model.kind == ModelKind::HyperbolicBall {
            run.push(hyperbolic_example_check(model, s, cfg.sweep.draws, tol.curvature)?, s);
        } else {
            run.skipped.push("hyperbolic_r_fm_example: needs hyperbolic_ball".into());
        }
    }
    let closed = model.is_closed();
    if wants(Suite::Global) {
        if closed || cfg.suite == Suite::Global {
            for k in 0..cfg.mc.functions {
                let f = global_function(model, cfg.mc.degree, sweep_function_seed(seed, k));
                let s = seed.wrapping_add(GLOBAL_SEED + k as u64);
                run.push(
                    global_pestov_residual(model, &f, &f.describe(), s, cfg.mc.count, tol.global)?,
                    s,
                );
            }
        } else {
            run.skipped.push(format!("global: {} is not closed", model.label()));
        }
    }
    if wants(Suite::Associated) {
        if closed || cfg.suite == Suite::Associated {
            for (k, class) in [InvarianceClass::SOn1, InvarianceClass::SOn2].into_iter().enumerate() {
                if model.dim <= class.free_columns() {
                    run.skipped.push(format!(
                        "associated_pestov_{}: needs n > {}",
                        class.name(),
                        class.free_columns()
                    ));
                    continue;
                }
                let kind = TestFunctionKind::for_model(model);
                let f = TestFunctionFamily::invariant(
                    kind,
                    model.dim,
                    cfg.mc.degree,
                    sweep_function_seed(seed ^ ASSOCIATED_SEED, k),
                    class,
                );
                let s = seed.wrapping_add(ASSOCIATED_SEED + k as u64);
                run.push(
                    associated_pestov_residual(model, class, &f, &f.describe(), s, cfg.mc.count, tol.global)?,
                    s,
                );
            }
        } else {
            run.skipped.push(format!("associated: {} is not closed", model.label()));
        }
    }
    Ok(run)
}

/// `check`: run the suite, write `report.json` and `summary.csv`.
pub fn cmd_check(cfg: &RunConfig) -> anyhow::Result<(Report, i32)> {
    let start = Instant::now();
    let run = with_pool(cfg.workers, || run_suite(cfg))??;
    let provenance = Provenance {
        config_hash: cfg.hash(),
        seeds: run.seeds.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        rng: RNG_ALGORITHM.to_string(),
        workers: cfg.workers,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let report = Report::new(cfg, &run.checks, run.skipped, provenance);
    report.write(&cfg.out)?;
    for r in &report.checks {
        println!(
            "{} {:<28} {:<26} residual={:.3e} stderr={:.3e} tol={:.1e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.check,
            format!("{}({})", r.model, r.n),
            r.residual,
            r.stderr,
            r.tolerance
        );
    }
    for s in &report.skipped {
        println!("SKIP {s}");
    }
    println!(
        "{}/{} checks passed; report in {}",
        report.summary.passed,
        report.summary.total,
        cfg.out.display()
    );
    let code = if report.all_pass() { EXIT_PASS } else { EXIT_FAIL };
    Ok((report, code))
}

/// One rung of a convergence ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct Rung {
    pub param: f64,
    pub residual: f64,
    pub stderr: f64,
}

/// Convergence table with the fitted slope and the band it must fall in.
#[derive(Clone, Debug, PartialEq)]
pub struct Convergence {
    pub kind: LadderKind,
    pub rungs: Vec<Rung>,
    pub slope: f64,
    pub expected: (f64, f64),
}

impl Convergence {
    pub fn ok(&self) -> bool {
        self.slope >= self.expected.0 && self.slope <= self.expected.1
    }

    pub fn csv(&self) -> String {
        let param = match self.kind {
            LadderKind::Fd => "h",
            LadderKind::Mc => "count",
            LadderKind::Integrator => "dt",
        };
        let mut s = format!("rung,{param},residual,stderr,slope\n");
        for (k, r) in self.rungs.iter().enumerate() {
            writeln!(s, "{k},{:e},{:e},{:e},{:e}", r.param, r.residual, r.stderr, self.slope).unwrap();
        }
        writeln!(
            s,
            "# fitted on {}; expected slope in [{}, {}]",
            if self.kind == LadderKind::Mc { "stderr" } else { "residual" },
            self.expected.0,
            self.expected.1
        )
        .unwrap();
        s
    }
}

fn parse_structural(name: &str) -> anyhow::Result<Structural> {
    Structural::ALL
        .into_iter()
        .find(|s| s.name().eq_ignore_ascii_case(name))
        .with_context(|| format!("convergence.identity: unknown structure equation `{name}`"))
}

pub fn run_convergence(cfg: &RunConfig) -> anyhow::Result<Convergence> {
    let model = &cfg.model;
    let ladder = cfg.convergence.rungs();
    let kind = cfg.convergence.kind;
    let mut rungs = Vec::with_capacity(ladder.len());
    let (slope, expected) = match kind {
        LadderKind::Fd => {
            let which = parse_structural(&cfg.convergence.identity)?;
            let w = sample_frame(model, &mut stream_rng(cfg.seed, 0));
            let f = global_function(model, cfg.sweep.degree, sweep_function_seed(cfg.seed, 0));
            for &h in &ladder {
                let method = DeriveMethod::Fd(FdConfig {
                    h,
                    levels: cfg.fd.levels,
                    dt_max: cfg.fd.dt_max,
                });
                let r = structural_residual(model, &f, &w, which, method)?;
                rungs.push(Rung {
                    param: h,
                    residual: r.absolute,
                    stderr: 0.0,
                });
            }
            let xs: Vec<f64> = rungs.iter().map(|r| r.param).collect();
            let ys: Vec<f64> = rungs.iter().map(|r| r.residual).collect();
            (loglog_slope(&xs, &ys), (1.9, f64::INFINITY))
        }
        LadderKind::Mc => {
            let f = global_function(model, cfg.mc.degree, sweep_function_seed(cfg.seed, 0));
            for &c in &ladder {
                let r = global_pestov_residual(
                    model,
                    &f,
                    &f.describe(),
                    cfg.seed.wrapping_add(GLOBAL_SEED),
                    c as usize,
                    cfg.tolerance.global,
                )?;
                rungs.push(Rung {
                    param: c,
                    residual: r.residual,
                    stderr: r.stderr,
                });
            }
            let xs: Vec<f64> = rungs.iter().map(|r| r.param).collect();
            let ys: Vec<f64> = rungs.iter().map(|r| r.stderr).collect();
            (loglog_slope(&xs, &ys), (-0.6, -0.4))
        }
        LadderKind::Integrator => {
            if model.kind != ModelKind::RoundSphere {
                bail!("the integrator ladder runs on round_sphere (got {})", model.label());
            }
            let w = FramePoint::reference(ChartPoint::origin(model.dim));
            let period = std::f64::consts::TAU * model.radius();
            for &dt in &ladder {
                let end = frame_flow(model, &w, period, dt)?;
                rungs.push(Rung {
                    param: dt,
                    residual: frame_distance(model, &end, &w)?,
                    stderr: 0.0,
                });
            }
            let xs: Vec<f64> = rungs.iter().map(|r| r.param).collect();
            let ys: Vec<f64> = rungs.iter().map(|r| r.residual).collect();
            (loglog_slope(&xs, &ys), (3.7, 4.3))
        }
    };
    Ok(Convergence {
        kind,
        rungs,
        slope,
        expected,
    })
}

/// `convergence`: write `convergence.csv`; exit 1 when the slope misses its band.
pub fn cmd_convergence(cfg: &RunConfig) -> anyhow::Result<(Convergence, i32)> {
    let conv = with_pool(cfg.workers, || run_convergence(cfg))??;
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    let csv = conv.csv();
    fs::write(cfg.out.join("convergence.csv"), &csv).context("cannot write convergence.csv")?;
    print!("{csv}");
    Ok((conv.clone(), if conv.ok() { EXIT_PASS } else { EXIT_FAIL }))
}

fn initial_frame(cfg: &RunConfig) -> anyhow::Result<FramePoint> {
    let n = cfg.model.dim;
    let x = cfg.flow.x.clone().unwrap_or_else(|| vec![0.0; n]);
    if x.len() != n {
        bail!("flow.x must have {n} entries (got {})", x.len());
    }
    let a = match &cfg.flow.a {
        Some(v) => {
            if v.len() != n * n {
                bail!("flow.a must have {} entries (got {})", n * n, v.len());
            }
            Mat::from_row_slice(n, n, v)
        }
        None => Mat::identity(n),
    };
    if a.orthonormality_defect() > 1e-10 || a.det() < 0.0 {
        bail!("flow.a must be a rotation matrix");
    }
    if cfg.flow.chart >= cfg.model.num_charts() {
        bail!("flow.chart must be below {} for {}", cfg.model.num_charts(), cfg.model.label());
    }
    let w = FramePoint::new(ChartPoint::new(cfg.flow.chart, x), a);
    cfg.model
        .check_domain(w.x.chart, &w.x.coords)
        .map_err(|e| anyhow::anyhow!("flow.x: {e}"))?;
    Ok(w)
}

/// `flow`: integrate the frame flow, write `flow.csv`; exit 1 when the
/// trajectory leaves the chart domain.
pub fn cmd_flow(cfg: &RunConfig) -> anyhow::Result<i32> {
    let model = &cfg.model;
    let n = model.dim;
    let w = initial_frame(cfg)?;
    let traj = frame_flow_trajectory(model, &w, cfg.flow.t, cfg.flow.dt)?;
    let mut s = String::from("t,chart_id");
    for i in 0..n {
        write!(s, ",x{i}").unwrap();
    }
    for i in 0..n {
        for j in 0..n {
            write!(s, ",a{i}{j}").unwrap();
        }
    }
    s.push('\n');
    for (t, p) in &traj.points {
        write!(s, "{t:e},{}", p.x.chart).unwrap();
        for v in p.x.coords.iter().chain(p.a.as_slice()) {
            write!(s, ",{v:e}").unwrap();
        }
        s.push('\n');
    }
    let last = traj.last();
    writeln!(
        s,
        "# final t={:e} invariant_defect={:e} orthonormality_defect={:e} distance_to_start={:e}",
        traj.points.last().map(|p| p.0).unwrap_or(0.0),
        last.invariant_defect(model)?,
        last.a.orthonormality_defect(),
        frame_distance(model, last, &w)?
    )
    .unwrap();
    let code = match &traj.error {
        Some(e) => {
            writeln!(s, "# error: {e}").unwrap();
            eprintln!("flow left the chart domain: {e}");
            EXIT_FAIL
        }
        None => EXIT_PASS,
    };
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    fs::write(cfg.out.join("flow.csv"), s).context("cannot write flow.csv")?;
    println!("{} rows written to {}", traj.points.len(), cfg.out.join("flow.csv").display());
    Ok(code)
}
