//! Error types for every stage of the pipeline.
use thiserror::Error;

/// Grid, potential and Hamiltonian construction errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    /// An axis or grid description is malformed.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    /// A potential term is missing a parameter, names an unknown axis or is
    /// placed in the wrong partition.
    #[error("configuration error: {0}")]
    Config(String),
    /// A potential evaluated to NaN or infinity.
    #[error("non-finite potential value {value} in term `{term}` at flat index {index}")]
    NonFinite { term: String, index: usize, value: f64 },
    /// A field does not match the grid it is applied on.
    #[error("field has {got} points, grid has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Eigensolver errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    /// The iteration did not reach the requested residual.
    #[error("eigensolver did not converge: best residual {best_residual:.3e} after {iterations} expansions")]
    NoConvergence { best_residual: f64, iterations: usize },
    /// The shifted operator could not be factored.
    #[error("singular shifted operator at sigma = {0}")]
    Singular(f64),
    /// `ground` was requested on a degenerate lowest level.
    #[error("lowest level is {multiplicity}-fold degenerate; use max_overlap selection")]
    Degenerate { multiplicity: usize },
    /// Caller error (empty candidate list, zero reference, bad count).
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Factorization and conditional-observable errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorizationError {
    /// Too many clock points fall below the node threshold.
    #[error("{masked} of {total} clock points are below the node threshold")]
    NodeSet { masked: usize, total: usize },
    /// A masked clock point was dereferenced.
    #[error("clock point {0} is masked")]
    Masked(usize),
    /// An observable acts on clock coordinates.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inputs do not fit together.
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Coupled-equation residual and self-consistent solve errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScfError {
    /// The iteration diverged or produced a non-finite value.
    #[error("self-consistent iteration diverged at sweep {sweep}: residual {residual:.3e}")]
    Divergence { sweep: usize, residual: f64 },
    /// A residual needed a multiplier at a masked point.
    #[error("mask error: {0}")]
    Mask(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Factorization(#[from] FactorizationError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Clock-model errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClockError {
    /// The momentum is not an allowed value for a periodic clock.
    #[error("quantization error: {0}")]
    Quantization(String),
    /// The two-handle constraint `L10 = C1 * L20` is violated.
    #[error("constraint error: {0}")]
    Constraint(String),
    /// The requested energy lies below the clock potential everywhere.
    #[error("no classically allowed region for energy {0}")]
    NoAllowedRegion(f64),
    /// Every tick fell below the minimum speed.
    #[error("all {0} ticks are below the minimum clock speed")]
    AllTicksDropped(usize),
    #[error("invalid clock model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Factorization(#[from] FactorizationError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Emergent-dynamics errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmergenceError {
    /// A trajectory point left the clock grid.
    #[error("range error: clock position {0:?} outside the grid")]
    Range(Vec<f64>),
    /// A trajectory point landed on a masked cell.
    #[error("mask error: trajectory at t = {0} touches a masked clock point")]
    Mask(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Scf(#[from] ScfError),
    #[error(transparent)]
    Factorization(#[from] FactorizationError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Parse errors for the text state dumps.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DumpError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
