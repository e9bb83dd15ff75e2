//! Report files: `report.json` and `summary.csv`.
//!
//! Everything outside `provenance` is a pure function of the configuration,
//! so two runs of one config produce identical files apart from that block.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use pestov_core::manifold::ModelParams;
use pestov_core::pestov::IdentityCheck;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const SCHEMA: &str = "pestov-lab/report/v1";

/// One identity check as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub check: String,
    pub model: String,
    pub n: usize,
    pub params: ModelParams,
    pub testfn: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
}

impl From<&IdentityCheck> for Record {
    fn from(c: &IdentityCheck) -> Self {
        Record {
            check: c.name.clone(),
            model: c.model.kind.name().to_string(),
            n: c.model.dim,
            params: c.model.params.clone(),
            testfn: c.testfn.clone(),
            lhs: c.lhs,
            rhs: c.rhs,
            residual: c.residual,
            stderr: c.stderr,
            tolerance: c.tolerance,
            pass: c.pass,
            diagnostics: c.diagnostics.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedUse {
    pub check: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: Vec<SeedUse>,
    pub version: String,
    pub rng: String,
    pub workers: usize,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub config: RunConfig,
    pub checks: Vec<Record>,
    /// Parts of the requested suite that do not apply to the model.
    pub skipped: Vec<String>,
    pub summary: Summary,
    pub provenance: Provenance,
}

impl Report {
    pub fn new(config: &RunConfig, checks: &[IdentityCheck], skipped: Vec<String>, provenance: Provenance) -> Self {
        let checks: Vec<Record> = checks.iter().map(Record::from).collect();
        let passed = checks.iter().filter(|c| c.pass).count();
        Report {
            schema: SCHEMA.to_string(),
            config: config.clone(),
            summary: Summary {
                total: checks.len(),
                passed,
                failed: checks.len() - passed,
            },
            checks,
            skipped,
            provenance,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let json = serde_json::to_string_pretty(self)? + "\n";
        fs::write(dir.join("report.json"), json).context("cannot write report.json")?;
        let mut w = csv::Writer::from_path(dir.join("summary.csv")).context("cannot write summary.csv")?;
        w.write_record([
            "check", "model", "n", "params", "testfn", "lhs", "rhs", "residual", "stderr", "tolerance", "pass",
        ])?;
        for r in &self.checks {
            w.write_record([
                r.check.clone(),
                r.model.clone(),
                r.n.to_string(),
                serde_json::to_string(&r.params)?,
                r.testfn.clone(),
                format!("{:e}", r.lhs),
                format!("{:e}", r.rhs),
                format!("{:e}", r.residual),
                format!("{:e}", r.stderr),
                format!("{:e}", r.tolerance),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
