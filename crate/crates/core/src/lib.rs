//! Directed polymers and last-passage percolation in discrete time and
//! continuous space: random environments, kinetic energies, lattice solvers
//! for minimal actions and partition functions, and shape-function estimation.

pub mod env;
pub mod error;
pub mod finite_temp;
pub mod kinetic;
pub mod lattice;
mod poly;
pub mod quad;
pub mod shape;
pub mod zero_temp;

pub use env::{EnvField, FieldParams, SupEstimate};
pub use error::{Error, Result};
pub use kinetic::{AuditReport, KineticEnergy, KineticForm, KineticSpec, SecondDerivativeWitness};
pub use lattice::{PathStats, TiltedLattice};
pub use zero_temp::SolveResult;
pub use finite_temp::{PartitionResult, StarResult};
pub use shape::{Model, PanelSpec, ShapeCurve};
