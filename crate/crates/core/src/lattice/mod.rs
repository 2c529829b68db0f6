//! Product grids over system and clock axes, potentials and the
//! finite-difference Hamiltonian.
mod axis;
mod grid;
mod hamiltonian;
mod potential;
mod stencil;

pub use axis::{Axis, Boundary, MIN_POINTS};
pub use grid::{AxisId, ProductGrid, MAX_AXES};
pub use hamiltonian::{build_hamiltonian, CompositeHamiltonian, HamiltonianTerms};
pub use potential::{Partition, PotentialKind, PotentialSpec};
pub use stencil::FdOrder;
