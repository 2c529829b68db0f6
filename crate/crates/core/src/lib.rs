//! Timeless quantum mechanics on a grid.
//!
//! A closed system plus clock is described by a single stationary state
//! `H Phi = E Phi`. This crate discretizes `H`, solves for `Phi`, factors it
//! exactly as `Phi(x, R) = X(R) Psi(x|R)`, solves the coupled marginal and
//! conditional equations self-consistently, and checks that `Psi` sliced
//! along a classical clock trajectory obeys a time-dependent Schrodinger
//! equation when the clock is heavy.
pub mod clockwork;
pub mod coupled_scf;
pub mod emergence;
pub mod error;
pub mod factorization;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod spectral;

pub use error::*;
pub use lattice::{
    build_hamiltonian, Axis, AxisId, Boundary, CompositeHamiltonian, FdOrder, HamiltonianTerms,
    PotentialKind, PotentialSpec, ProductGrid,
};
pub use num_complex::Complex64;
pub use spectral::{
    select_state, solve_eigenpairs, solve_eigenpairs_with, JointEigenstate, Selection, SolverOptions, Which,
};
pub use factorization::{
    conditional_expectation, effective_clock_potential, factorize, mean_field_momentum, FactorizedState, Gauge,
    Observable,
};
pub use coupled_scf::{
    extract_multipliers, scf_solve, CoupledResiduals, InitialGuess, Multipliers, ResidualForm, ScfConfig, ScfOutcome,
};
pub use clockwork::{
    classical_trajectory, clock_quality, marginal_ansatz, tick_schedule, wkb_ansatz_harmonic, ClassicalTrajectory,
    ClockKind, ClockModel, ClockQuality, Envelope, Sense, TickSchedule,
};
pub use emergence::{
    emergence_compare, gauge_factor, gauge_to_tdse_frame, slice_conditional, tdse_propagate, ConditionalTimeSlice,
    EmergenceReport, GaugeFactor,
};
pub use io::StateDump;
