//! Scenario runner: reads a scenario file, runs its pipeline and writes
//! reports, state dumps and a checksummed manifest.
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use timeless_core::{build_hamiltonian, ClockKind};

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod sweep;

use config::{GaugeChoice, GuessChoice, Scenario, SelectionConfig, Stage, Target, TickConfig};
pub use manifest::{RunManifest, StageRecord, StageStatus};
pub use sweep::Point;

/// Default root for outputs when neither the flag nor the file sets one.
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

/// A problem found in a scenario file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    /// Dotted location, empty for file-level problems.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {}", issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Schema { path: PathBuf, issues: Vec<Issue> },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage `{stage}` failed at {point}: {message}")]
    Stage { stage: Stage, point: String, message: String },
    #[error("{0}")]
    Report(String),
}

impl RunError {
    /// Process exit code: 2 for unusable input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema { .. } => 2,
            RunError::Io { .. } | RunError::Stage { .. } | RunError::Report(_) => 1,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.to_path_buf(), source }
    }
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Output root; the scenario writes into `<out>/<name>`.
    pub out: Option<PathBuf>,
    /// Scenarios and sweep points run at once; 0 uses all cores.
    pub workers: usize,
    pub seed: Option<u64>,
    pub stages: Option<Vec<Stage>>,
}

/// A parsed, validated scenario ready to run.
#[derive(Clone, Debug)]
pub struct Plan {
    pub source: PathBuf,
    pub scenario: Scenario,
    pub points: Vec<Point>,
}

fn issue(field: &str, message: impl Into<String>) -> Issue {
    Issue { field: field.into(), message: message.into() }
}

/// Stages each stage needs to have run first.
pub fn requirements(stage: Stage, scenario: &Scenario) -> Vec<Stage> {
    match stage {
        Stage::Solve => vec![],
        Stage::Factorize => vec![Stage::Solve],
        Stage::Scf => match scenario.scf.initial_guess {
            GuessChoice::Solved => vec![Stage::Solve, Stage::Factorize],
            _ => vec![],
        },
        Stage::Residuals | Stage::ClockQuality | Stage::Emergence => vec![Stage::Solve, Stage::Factorize],
    }
}

fn needs_clock(s: &Scenario) -> bool {
    s.pipeline.iter().any(|st| matches!(st, Stage::ClockQuality | Stage::Emergence))
        || s.solve.target == Target::Ansatz
        || matches!(s.solve.selection, SelectionConfig::Ansatz { .. })
        || s.factorize.gauge == GaugeChoice::Ansatz
}

/// Schema and physics checks of one expanded scenario.
pub fn check_scenario(s: &Scenario) -> Vec<Issue> {
    let mut out = Vec::new();
    if s.name.is_empty() || s.name.contains(['/', '\\']) || s.name.starts_with('.') {
        out.push(issue("name", "must be a nonempty file name"));
    }
    if s.pipeline.is_empty() {
        out.push(issue("pipeline", "no stages"));
    }
    let mut sorted = s.pipeline.clone();
    sorted.sort();
    sorted.dedup();
    if sorted != s.pipeline {
        out.push(issue("pipeline", "stages must be unique and in the order solve, factorize, scf, residuals, clock_quality, emergence"));
    }
    for st in &s.pipeline {
        for need in requirements(*st, s) {
            if !s.pipeline.contains(&need) {
                out.push(issue("pipeline", format!("`{st}` requires `{need}`")));
            }
        }
    }
    let grid = match s.grid.build() {
        Ok(g) => Some(g),
        Err(m) => {
            out.push(issue("grid", m));
            None
        }
    };
    if let Some(g) = &grid {
        if let Err(e) = build_hamiltonian(g, &s.hamiltonian.terms(), s.hamiltonian.fd_order) {
            out.push(issue("hamiltonian", e.to_string()));
        }
        if let Some(model) = &s.clock {
            if let Err(e) = model.check_grid(g) {
                out.push(issue("clock", e.to_string()));
            }
        }
    }
    if needs_clock(s) && s.clock.is_none() {
        out.push(issue("clock", "the pipeline needs a clock model"));
    }
    let sv = &s.solve;
    if sv.count == 0 {
        out.push(issue("solve.count", "must be at least 1"));
    }
    if !(sv.tolerance > 0.0) {
        out.push(issue("solve.tolerance", "must be positive"));
    }
    if let Target::Nearest { energy } = sv.target {
        if !energy.is_finite() {
            out.push(issue("solve.target.energy", "must be finite"));
        }
    }
    match sv.selection {
        SelectionConfig::Index { index } if index >= sv.count => {
            out.push(issue("solve.selection.index", format!("{index} is beyond the {} computed states", sv.count)));
        }
        SelectionConfig::Ansatz { window } if !(window > 0.0) => {
            out.push(issue("solve.selection.window", "must be positive"));
        }
        _ => {}
    }
    if !(s.factorize.node_threshold >= 0.0) {
        out.push(issue("factorize.node_threshold", "must be nonnegative"));
    }
    if let Err(e) = pipeline::scf_config(&s.scf, None).validate() {
        out.push(issue("scf", e.to_string()));
    }
    let em = &s.emergence;
    match &em.tick {
        TickConfig::Named(n) if n != "grid" => out.push(issue("emergence.tick", format!("`{n}` is neither \"grid\" nor a number"))),
        TickConfig::Interval(dt) if !(*dt > 0.0) => out.push(issue("emergence.tick", "must be positive")),
        _ => {}
    }
    if !(em.max_substep > 0.0) {
        out.push(issue("emergence.max_substep", "must be positive"));
    }
    if !(em.min_speed >= 0.0) {
        out.push(issue("emergence.min_speed", "must be nonnegative"));
    }
    if let Some([a, b]) = em.window {
        if !(a.is_finite() && b.is_finite() && b > a) {
            out.push(issue("emergence.window", "must be a finite increasing pair"));
        }
    }
    if s.pipeline.contains(&Stage::Emergence) {
        if let Some(m) = &s.clock {
            if em.window.is_none() && m.kind == ClockKind::Linear {
                out.push(issue("emergence.window", "a linear clock has no period; give a window"));
            }
            if let Some(init) = &em.initial {
                if init.len() != m.dimension() {
                    out.push(issue("emergence.initial", format!("needs {} components", m.dimension())));
                }
            }
        }
    }
    out
}

fn read(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| RunError::io(path, e))
}

/// Parse, expand and validate without running. The error holds every
/// issue found.
pub fn plan(path: &Path, opts: &RunOptions) -> Result<Plan, RunError> {
    let text = read(path)?;
    plan_text(&text, path, opts)
}

pub fn plan_text(text: &str, source: &Path, opts: &RunOptions) -> Result<Plan, RunError> {
    let schema = |issues| RunError::Schema { path: source.to_path_buf(), issues };
    let (mut scenario, mut points) = sweep::expand(text).map_err(schema)?;
    let mut issues = Vec::new();
    for p in &mut points {
        apply_overrides(&mut p.scenario, opts);
        for mut i in check_scenario(&p.scenario) {
            if p.value.is_some() {
                i.message = format!("[{}] {}", p.label, i.message);
            }
            if !issues.contains(&i) {
                issues.push(i);
            }
        }
    }
    if !issues.is_empty() {
        return Err(schema(issues));
    }
    apply_overrides(&mut scenario, opts);
    Ok(Plan { source: source.to_path_buf(), scenario, points })
}

fn apply_overrides(s: &mut Scenario, opts: &RunOptions) {
    if let Some(seed) = opts.seed {
        s.seed = seed;
    }
    if let Some(stages) = &opts.stages {
        let mut st = stages.clone();
        st.sort();
        st.dedup();
        s.pipeline = st;
    }
}

/// Issues in a scenario file; empty when it is ready to run.
pub fn validate(path: &Path) -> Result<Vec<Issue>, RunError> {
    match plan(path, &RunOptions::default()) {
        Ok(_) => Ok(Vec::new()),
        Err(RunError::Schema { issues, .. }) => Ok(issues),
        Err(e) => Err(e),
    }
}

impl Plan {
    pub fn output_dir(&self, opts: &RunOptions) -> PathBuf {
        let root = opts
            .out
            .clone()
            .or_else(|| self.scenario.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
        root.join(&self.scenario.name)
    }
}

/// Run a scenario file. On a stage failure the manifest is still written,
/// with the failed stage flagged, and the error is returned.
pub fn run(path: &Path, opts: &RunOptions) -> Result<RunManifest, RunError> {
    let plan = plan(path, opts)?;
    run_all(std::slice::from_ref(&plan), opts)?.remove(0)
}

/// Run several validated plans; scenarios and their sweep points share one
/// pool of `opts.workers` threads.
pub fn run_all(plans: &[Plan], opts: &RunOptions) -> Result<Vec<Result<RunManifest, RunError>>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| RunError::Report(format!("worker pool: {e}")))?;
    Ok(pool.install(|| plans.par_iter().map(|p| run_plan(p, opts)).collect()))
}

fn run_plan(plan: &Plan, opts: &RunOptions) -> Result<RunManifest, RunError> {
    let dir = plan.output_dir(opts);
    fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
    let records: Vec<pipeline::PointOutcome> =
        plan.points.par_iter().map(|p| pipeline::run_point(p, &dir.join(&p.dir))).collect();
    let sweep = pipeline::write_sweep_summary(plan, &records, &dir)?;
    // Written once, after every point has finished.
    let manifest = RunManifest::build(plan, &dir, &records, sweep)?;
    manifest.write(&dir)?;
    match records.iter().find_map(|r| r.failure.clone()) {
        Some((stage, point, message)) => Err(RunError::Stage { stage, point, message }),
        None => Ok(manifest),
    }
}

/// Re-read a finished run, verify its checksums and regenerate the
/// plot-ready tables under `plots/`.
pub fn report(dir: &Path) -> Result<manifest::Report, RunError> {
    manifest::report(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
pipeline = ["solve", "factorize", "emergence"]
[grid]
system = [{ label = "x", count = 8, min = -1.0, max = 1.0 }]
clock = [{ label = "r", count = 8, min = -1.0, max = 1.0, mass = 10.0 }]
[clock]
kind = "linear"
inertia = 10.0
momenta = [1.0]
"#;

    fn issues(text: &str) -> Vec<Issue> {
        match plan_text(text, Path::new("t.cfg"), &RunOptions::default()) {
            Ok(_) => vec![],
            Err(RunError::Schema { issues, .. }) => issues,
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn linear_clock_needs_a_window() {
        let found = issues(BASE);
        assert_eq!(found.len(), 1, "{found:?}");
        assert_eq!(found[0].field, "emergence.window");
        assert!(issues(&format!("{BASE}[emergence]\nwindow = [0.0, 1.0]\n")).is_empty());
    }

    #[test]
    fn stage_dependencies_are_checked() {
        let text = BASE.replace(r#"["solve", "factorize", "emergence"]"#, r#"["residuals"]"#);
        let found = issues(&text);
        assert!(found.iter().any(|i| i.message == "`residuals` requires `solve`"), "{found:?}");
        let text = BASE.replace(r#"["solve", "factorize", "emergence"]"#, r#"["factorize", "solve"]"#);
        assert!(issues(&text).iter().any(|i| i.message.contains("in the order")));
    }

    #[test]
    fn stage_override_is_sorted_and_deduplicated() {
        let opts = RunOptions { stages: Some(vec![Stage::Factorize, Stage::Solve, Stage::Solve]), ..Default::default() };
        let p = plan_text(BASE, Path::new("t.cfg"), &opts).unwrap();
        assert_eq!(p.scenario.pipeline, [Stage::Solve, Stage::Factorize]);
        assert_eq!(p.output_dir(&opts), Path::new(DEFAULT_OUTPUT_ROOT).join("t"));
    }

    #[test]
    fn schema_errors_exit_with_2() {
        let e = plan_text("name = 1", Path::new("t.cfg"), &RunOptions::default()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
