//! Scenario files: TOML, one scenario per file.
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use timeless_core::factorization::DEFAULT_NODE_THRESHOLD;
use timeless_core::{Axis, Boundary, ClockModel, FdOrder, HamiltonianTerms, PotentialSpec, ProductGrid};

/// Pipeline stages in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Solve,
    Factorize,
    Scf,
    Residuals,
    ClockQuality,
    Emergence,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Solve, Stage::Factorize, Stage::Scf, Stage::Residuals, Stage::ClockQuality, Stage::Emergence];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Solve => "solve",
            Stage::Factorize => "factorize",
            Stage::Scf => "scf",
            Stage::Residuals => "residuals",
            Stage::ClockQuality => "clock_quality",
            Stage::Emergence => "emergence",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn all_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_stages")]
    pub pipeline: Vec<Stage>,
    /// Root for outputs; the scenario writes into `<root>/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub grid: GridConfig,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<ClockModel>,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub factorize: FactorizeConfig,
    #[serde(default)]
    pub scf: ScfSection,
    #[serde(default)]
    pub emergence: EmergenceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub system: Vec<AxisConfig>,
    pub clock: Vec<AxisConfig>,
}

/// An axis; `angular = true` fixes a periodic `[0, 2pi)` range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub label: String,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default)]
    pub angular: bool,
}

fn one() -> f64 {
    1.0
}

impl AxisConfig {
    pub fn to_axis(&self) -> Result<Axis, String> {
        if self.angular {
            if self.min.is_some() || self.max.is_some() || self.boundary == Some(Boundary::Dirichlet) {
                return Err(format!("axis `{}`: angular axes take no min, max or dirichlet boundary", self.label));
            }
            return Axis::angular(&self.label, self.count, self.mass).map_err(|e| e.to_string());
        }
        let (min, max) = match (self.min, self.max) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(format!("axis `{}`: min and max are required", self.label)),
        };
        let boundary = self.boundary.unwrap_or(Boundary::Dirichlet);
        Axis::new(&self.label, self.count, min, max, boundary, self.mass).map_err(|e| e.to_string())
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<ProductGrid, String> {
        let sys = self.system.iter().map(AxisConfig::to_axis).collect::<Result<Vec<_>, _>>()?;
        let clk = self.clock.iter().map(AxisConfig::to_axis).collect::<Result<Vec<_>, _>>()?;
        ProductGrid::new(sys, clk).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    #[serde(default = "second")]
    pub fd_order: FdOrder,
    #[serde(default)]
    pub system: Vec<PotentialSpec>,
    #[serde(default)]
    pub clock: Vec<PotentialSpec>,
    #[serde(default)]
    pub interaction: Vec<PotentialSpec>,
}

fn second() -> FdOrder {
    FdOrder::Second
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        HamiltonianConfig { fd_order: FdOrder::Second, system: vec![], clock: vec![], interaction: vec![] }
    }
}

impl HamiltonianConfig {
    pub fn terms(&self) -> HamiltonianTerms {
        HamiltonianTerms {
            system: self.system.clone(),
            clock: self.clock.clone(),
            interaction: self.interaction.clone(),
        }
    }
}

/// Where in the spectrum to look.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", deny_unknown_fields)]
pub enum Target {
    Lowest,
    Nearest { energy: f64 },
    /// Near the energy of the clock ansatz times the adiabatic system state.
    Ansatz,
}

/// Which computed state the later stages use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", deny_unknown_fields)]
pub enum SelectionConfig {
    Ground,
    Index { index: usize },
    /// Largest overlap with the ansatz reference, projected onto all states
    /// within `window` of the best one.
    Ansatz {
        #[serde(default = "default_window")]
        window: f64,
    },
}

fn default_window() -> f64 {
    1e-9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub count: usize,
    pub target: Target,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_limit: Option<usize>,
    pub selection: SelectionConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            count: 1,
            target: Target::Lowest,
            tolerance: 1e-10,
            dense_limit: None,
            selection: SelectionConfig::Ground,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeChoice {
    ZeroPhase,
    /// Phase of the clock plane wave.
    Ansatz,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorizeConfig {
    pub gauge: GaugeChoice,
    pub node_threshold: f64,
}

impl Default for FactorizeConfig {
    fn default() -> Self {
        FactorizeConfig { gauge: GaugeChoice::ZeroPhase, node_threshold: DEFAULT_NODE_THRESHOLD }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessChoice {
    SeparableProduct,
    AdiabaticBo,
    /// The factorized solved state.
    Solved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScfSection {
    pub max_iterations: usize,
    pub mixing: f64,
    pub tolerance: f64,
    pub initial_guess: GuessChoice,
}

impl Default for ScfSection {
    fn default() -> Self {
        let d = timeless_core::ScfConfig::default();
        ScfSection {
            max_iterations: d.max_iterations,
            mixing: d.mixing,
            tolerance: d.tolerance,
            initial_guess: GuessChoice::AdiabaticBo,
        }
    }
}

/// Interval between ticks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TickConfig {
    /// `"grid"`: one tick per clock grid spacing.
    Named(String),
    Interval(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmergenceConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    /// Trajectory window; one period when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    pub tick: TickConfig,
    pub min_speed: f64,
    pub max_substep: f64,
}

impl Default for EmergenceConfig {
    fn default() -> Self {
        EmergenceConfig {
            initial: None,
            window: None,
            tick: TickConfig::Named("grid".into()),
            min_speed: 0.0,
            max_substep: 0.5,
        }
    }
}

/// A one-parameter sweep. Each value is written to every `targets` path
/// (times its scale); `per_point` tables add point-specific overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    pub values: Vec<f64>,
    #[serde(default)]
    pub targets: Vec<SweepTarget>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_point: Vec<toml::Table>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTarget {
    /// Dotted path; numeric segments index arrays, e.g. `grid.clock.0.mass`.
    pub path: String,
    #[serde(default = "one")]
    pub scale: f64,
}
