//! Exact diagonalization of coupled fermion / hard-core boson
//! Lipkin-Meshkov-Glick systems and the particle-hole ODLRO witness
//! `lambda_G` of each sector.

pub mod basis;
pub mod cli;
pub mod eigensolver;
pub mod error;
pub mod model;
pub mod secondq;
pub mod sweep;
pub mod validate;
pub mod witness;

pub use basis::{CompositeBasis, ModeLayout, Restriction, Sector};
pub use eigensolver::{GroundState, SolveOptions, SolverPath};
pub use error::{Error, Result};
pub use model::{ModelInstance, ParamName, SystemParams};
pub use witness::{compute_witness, theoretical_bound, WitnessResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
