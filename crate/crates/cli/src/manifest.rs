//! `manifest.json`: what ran, how long it took, and checksums of every
//! file written.
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::Stage;
use crate::pipeline::PointOutcome;
use crate::{Plan, RunError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    /// Not run because an earlier stage failed.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<String>,
    /// Solver counters and similar run details kept out of the reports.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub log: BTreeMap<String, Value>,
}

impl StageRecord {
    pub(crate) fn new(
        stage: Stage,
        status: StageStatus,
        seconds: f64,
        error: Option<String>,
        files: Vec<String>,
        log: BTreeMap<String, Value>,
    ) -> Self {
        StageRecord { stage, status, seconds, error, files, log }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub label: String,
    pub dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub stages: Vec<StageRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub scenario: String,
    /// SHA-256 of the scenario as run, serialized to canonical JSON.
    pub scenario_hash: String,
    pub seed: u64,
    pub ok: bool,
    pub points: Vec<PointRecord>,
    pub files: Vec<FileEntry>,
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn entry(dir: &Path, rel: &str) -> Result<FileEntry, RunError> {
    let p = dir.join(rel);
    let bytes = fs::read(&p).map_err(|e| RunError::io(&p, e))?;
    Ok(FileEntry { path: rel.to_string(), bytes: bytes.len() as u64, sha256: sha256(&bytes) })
}

impl RunManifest {
    pub(crate) fn build(
        plan: &Plan,
        dir: &Path,
        points: &[PointOutcome],
        extra: Vec<String>,
    ) -> Result<Self, RunError> {
        let canonical = serde_json::to_vec(&plan.scenario).map_err(|e| RunError::Report(e.to_string()))?;
        let mut names: Vec<String> =
            points.iter().flat_map(|p| p.stages.iter().flat_map(|s| s.files.iter().cloned())).chain(extra).collect();
        names.sort();
        names.dedup();
        let files = names.iter().map(|n| entry(dir, n)).collect::<Result<Vec<_>, _>>()?;
        Ok(RunManifest {
            schema_version: MANIFEST_SCHEMA,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: plan.scenario.name.clone(),
            scenario_hash: sha256(&canonical),
            seed: plan.scenario.seed,
            ok: points.iter().all(|p| p.failure.is_none()),
            points: points
                .iter()
                .map(|p| PointRecord { label: p.label.clone(), dir: p.dir.clone(), value: p.value, stages: p.stages.clone() })
                .collect(),
            files,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        let path = dir.join(MANIFEST_FILE);
        let mut s = serde_json::to_string_pretty(self).map_err(|e| RunError::Report(e.to_string()))?;
        s.push('\n');
        fs::write(&path, s).map_err(|e| RunError::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| RunError::Report(format!("{}: {e}", path.display())))
    }

    /// Checksums by path, for comparing runs.
    pub fn checksums(&self) -> BTreeMap<&str, &str> {
        self.files.iter().map(|f| (f.path.as_str(), f.sha256.as_str())).collect()
    }
}

/// Result of re-reading a finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub manifest: RunManifest,
    /// Files whose checksum no longer matches, or that are missing.
    pub mismatched: Vec<String>,
    /// Tables written under `plots/`.
    pub plots: Vec<String>,
    /// Human-readable summary, one line per point and stage.
    pub summary: Vec<String>,
}

fn read_json(dir: &Path, rel: &str) -> Option<Value> {
    serde_json::from_str(&fs::read_to_string(dir.join(rel)).ok()?).ok()
}

fn headline(stage: Stage, v: &Value) -> String {
    let f = |k: &str| v.pointer(k).cloned().unwrap_or(Value::Null);
    match stage {
        Stage::Solve => format!("E = {}", f("/selected/energy")),
        Stage::Factorize => format!("reconstruction error {}", f("/reconstruction_error")),
        Stage::Scf => format!("converged {} in {} sweeps", f("/converged"), f("/sweeps")),
        Stage::Residuals => format!("|eps - E| = {}", f("/epsilon_error")),
        Stage::ClockQuality => format!("adiabaticity {}", f("/quality/adiabaticity")),
        Stage::Emergence => format!("min fidelity {}", f("/report/min_fidelity")),
    }
}

fn report_file(stage: Stage) -> &'static str {
    match stage {
        Stage::Solve => "solve.json",
        Stage::Factorize => "factorize.json",
        Stage::Scf => "scf.json",
        Stage::Residuals => "residuals.json",
        Stage::ClockQuality => "clock_quality.json",
        Stage::Emergence => "emergence.json",
    }
}

pub(crate) fn report(dir: &Path) -> Result<Report, RunError> {
    let manifest = RunManifest::read(dir)?;
    let mismatched: Vec<String> = manifest
        .files
        .iter()
        .filter(|f| fs::read(dir.join(&f.path)).map(|b| sha256(&b) != f.sha256).unwrap_or(true))
        .map(|f| f.path.clone())
        .collect();
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| RunError::io(&plots, e))?;
    let mut summary = Vec::new();
    let mut fidelity: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for p in &manifest.points {
        let rel = |f: &str| if p.dir.is_empty() { f.to_string() } else { format!("{}/{f}", p.dir) };
        for s in &p.stages {
            let line = match s.status {
                StageStatus::Ok => {
                    let v = read_json(dir, &rel(report_file(s.stage))).unwrap_or(Value::Null);
                    if s.stage == Stage::Emergence {
                        let curve: Vec<(f64, f64)> =
                            serde_json::from_value(v.pointer("/report/fidelity_curve").cloned().unwrap_or(Value::Null))
                                .unwrap_or_default();
                        fidelity.push((p.label.clone(), curve));
                    }
                    headline(s.stage, &v)
                }
                StageStatus::Failed => format!("FAILED: {}", s.error.clone().unwrap_or_default()),
                StageStatus::Skipped => "skipped".into(),
            };
            summary.push(format!("{} {}: {line}", p.label, s.stage));
        }
    }
    let mut written = Vec::new();
    if !fidelity.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["point", "time", "fidelity"]).map_err(|e| RunError::Report(e.to_string()))?;
        for (label, curve) in &fidelity {
            for (t, f) in curve {
                w.write_record([label.clone(), t.to_string(), f.to_string()]).map_err(|e| RunError::Report(e.to_string()))?;
            }
        }
        let bytes = w.into_inner().map_err(|e| RunError::Report(e.to_string()))?;
        let path = plots.join("fidelity.csv");
        fs::write(&path, bytes).map_err(|e| RunError::io(&path, e))?;
        written.push("plots/fidelity.csv".to_string());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["point", "stage", "status", "seconds"]).map_err(|e| RunError::Report(e.to_string()))?;
    for p in &manifest.points {
        for s in &p.stages {
            let status = serde_json::to_value(s.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            w.write_record([p.label.clone(), s.stage.to_string(), status, s.seconds.to_string()])
                .map_err(|e| RunError::Report(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| RunError::Report(e.to_string()))?;
    let path = plots.join("stages.csv");
    fs::write(&path, bytes).map_err(|e| RunError::io(&path, e))?;
    written.push("plots/stages.csv".to_string());
    Ok(Report { manifest, mismatched, plots: written, summary })
}
