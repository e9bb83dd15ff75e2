//! Run configuration: a TOML file with dotted keys, overridden by the
//! `PESTOV_LAB_SEED` environment variable and then by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use pestov_core::manifold::ModelParams;
use pestov_core::{MetricModel, ModelKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Smallest sample count accepted for Monte Carlo checks.
pub const MIN_COUNT: usize = 1000;
/// Smallest number of rungs in a convergence ladder.
pub const MIN_RUNGS: usize = 3;
pub const SEED_ENV: &str = "PESTOV_LAB_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Structural,
    Pointwise,
    Curvature,
    Global,
    Associated,
    All,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Suite::Structural => "structural",
            Suite::Pointwise => "pointwise",
            Suite::Curvature => "curvature",
            Suite::Global => "global",
            Suite::Associated => "associated",
            Suite::All => "all",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderKind {
    /// Finite-difference step `h` on a structure equation.
    Fd,
    /// Sample count of a global identity.
    Mc,
    /// RK4 step on the closed great circle of the round sphere.
    Integrator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Random `(w, f)` pairs per pointwise check.
    pub points: usize,
    /// Degree of the random test functions.
    pub degree: usize,
    /// Random draws per curvature cross-check.
    pub draws: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            points: 50,
            degree: 2,
            draws: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub count: usize,
    /// Independent test functions per global check.
    pub functions: usize,
    pub degree: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            count: 1_000_000,
            functions: 5,
            degree: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub structural: f64,
    pub pointwise: f64,
    pub curvature: f64,
    pub image: f64,
    /// Absolute floor for the global identities; the pass rule widens it to
    /// four standard errors.
    pub global: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            structural: 1e-6,
            pointwise: 1e-6,
            curvature: 1e-8,
            image: 1e-12,
            global: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdConfig {
    /// Richardson levels used by the finite-difference ladder.
    pub levels: usize,
    /// Largest RK4 step inside a horizontal finite difference.
    pub dt_max: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            levels: 0,
            dt_max: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub kind: LadderKind,
    /// Step sizes or sample counts; empty selects the default ladder of `kind`.
    pub ladder: Vec<f64>,
    /// Structure equation used by the finite-difference ladder.
    pub identity: String,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            kind: LadderKind::Fd,
            ladder: Vec::new(),
            identity: "VB".into(),
        }
    }
}

impl ConvergenceConfig {
    pub fn rungs(&self) -> Vec<f64> {
        if !self.ladder.is_empty() {
            return self.ladder.clone();
        }
        match self.kind {
            LadderKind::Fd => vec![1e-1, 5e-2, 2.5e-2, 1.25e-2],
            LadderKind::Mc => vec![1e4, 1e5, 1e6, 1e7],
            LadderKind::Integrator => vec![0.2, 0.1, 0.05, 0.025],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub t: f64,
    pub dt: f64,
    pub chart: u8,
    /// Initial chart coordinates; the chart origin when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    /// Initial fiber rotation, row-major; the identity when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            t: std::f64::consts::TAU,
            dt: 1e-3,
            chart: 0,
            x: None,
            a: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub suite: Suite,
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
    pub out: PathBuf,
    pub model: MetricModel,
    pub sweep: SweepConfig,
    pub mc: McConfig,
    pub tolerance: Tolerances,
    pub fd: FdConfig,
    pub convergence: ConvergenceConfig,
    pub flow: FlowConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            suite: Suite::All,
            seed: 42,
            workers: 0,
            out: PathBuf::from("pestov-report"),
            model: MetricModel::flat_torus(2),
            sweep: SweepConfig::default(),
            mc: McConfig::default(),
            tolerance: Tolerances::default(),
            fd: FdConfig::default(),
            convergence: ConvergenceConfig::default(),
            flow: FlowConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub suite: Option<Suite>,
    pub model: Option<String>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Read `path` (defaults when `None`), then apply the environment and
    /// the flags, then validate.
    pub fn load(path: Option<&Path>, env_seed: Option<String>, o: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = env_seed {
            cfg.seed = s
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV} must be an unsigned 64-bit integer (got `{s}`)"))?;
        }
        cfg.apply(o)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> anyhow::Result<()> {
        if let Some(s) = o.suite {
            self.suite = s;
        }
        if let Some(name) = &o.model {
            let kind = ModelKind::from_str(name).map_err(|e| anyhow::anyhow!("--model: {e}"))?;
            if kind != self.model.kind {
                self.model.kind = kind;
                self.model.params = ModelParams::default();
            }
        }
        if let Some(d) = o.dim {
            if d != self.model.dim {
                self.model.params.periods = None;
            }
            self.model.dim = d;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(c) = o.count {
            self.mc.count = c;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        Ok(())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.model
            .validate()
            .map_err(|e| anyhow::anyhow!("model: {e}"))?;
        if self.mc.count < MIN_COUNT {
            bail!("mc.count must be at least {MIN_COUNT} (got {})", self.mc.count);
        }
        if self.mc.functions == 0 {
            bail!("mc.functions must be positive");
        }
        if self.sweep.points == 0 {
            bail!("sweep.points must be positive");
        }
        if self.sweep.draws == 0 {
            bail!("sweep.draws must be positive");
        }
        let t = &self.tolerance;
        for (key, v) in [
            ("tolerance.structural", t.structural),
            ("tolerance.pointwise", t.pointwise),
            ("tolerance.curvature", t.curvature),
            ("tolerance.image", t.image),
            ("tolerance.global", t.global),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{key} must be positive (got {v})");
            }
        }
        if !(self.fd.dt_max > 0.0 && self.fd.dt_max.is_finite()) {
            bail!("fd.dt_max must be positive (got {})", self.fd.dt_max);
        }
        if !(self.flow.dt > 0.0 && self.flow.dt.is_finite()) {
            bail!("flow.dt must be positive (got {})", self.flow.dt);
        }
        if !self.flow.t.is_finite() {
            bail!("flow.t must be finite");
        }
        let rungs = self.convergence.rungs();
        if rungs.len() < MIN_RUNGS {
            bail!(
                "convergence.ladder needs at least {MIN_RUNGS} rungs (got {})",
                rungs.len()
            );
        }
        if rungs.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            bail!("convergence.ladder entries must be positive");
        }
        if self.convergence.kind == LadderKind::Mc && rungs.iter().any(|&r| (r as usize) < MIN_COUNT) {
            bail!("convergence.ladder counts must be at least {MIN_COUNT}");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn dotted_keys_and_unknown_fields() {
        let c = RunConfig::from_toml(
            "suite = \"global\"\nmodel.kind = \"round_sphere\"\nmodel.dim = 2\nmc.count = 5000\n",
        )
        .unwrap();
        assert_eq!(c.suite, Suite::Global);
        assert_eq!((c.model.kind, c.model.dim), (ModelKind::RoundSphere, 2));
        assert_eq!(c.mc.count, 5000);
        assert_eq!(c.mc.functions, 5);
        let e = RunConfig::from_toml("mc.cout = 5000\n").unwrap_err();
        assert!(format!("{e:#}").contains("cout"));
    }

    #[test]
    fn validation_names_the_key() {
        let mut c = RunConfig::default();
        c.mc.count = 10;
        assert!(c.validate().unwrap_err().to_string().contains("mc.count"));
        let mut c = RunConfig::default();
        c.tolerance.pointwise = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("tolerance.pointwise"));
        let mut c = RunConfig::default();
        c.convergence.ladder = vec![0.1, 0.05];
        assert!(c.validate().unwrap_err().to_string().contains("convergence.ladder"));
        let mut c = RunConfig::default();
        c.flow.dt = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("flow.dt"));
    }

    #[test]
    fn precedence_is_file_then_env_then_flags() {
        let o = Overrides::default();
        let c = RunConfig::load(None, Some("7".into()), &o).unwrap();
        assert_eq!(c.seed, 7);
        let o = Overrides {
            seed: Some(9),
            model: Some("sphere".into()),
            dim: Some(3),
            ..Default::default()
        };
        let c = RunConfig::load(None, Some("7".into()), &o).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.model.kind, ModelKind::RoundSphere);
        assert_eq!(c.model.dim, 3);
        assert!(RunConfig::load(None, Some("x".into()), &Overrides::default()).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
