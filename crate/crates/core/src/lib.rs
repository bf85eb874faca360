//! Finite-horizon dynamic-regret-optimal control for linear time-varying systems.
//!
//! Controllers are synthesised over closed-loop system responses by solving
//! semidefinite programs, then executed and audited by simulation against the
//! optimal non-causal benchmark.

pub mod analysis;
pub mod conic;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod noncausal;
pub mod sim;
pub mod slp;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use model::{build_stacked, ConstraintSet, CostWeights, DisturbanceModel, LtvSystem, StackedDynamics};
pub use noncausal::NonCausalOracle;
pub use slp::{CausalController, SystemResponse};
