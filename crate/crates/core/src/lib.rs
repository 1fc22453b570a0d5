//! Nonlinear GMRES acceleration of Richardson iteration for linear systems:
//! NGMRES(m), the alternating aNGMRES(m,p), GMRES reference solvers,
//! convergence-bound calculators and test-problem generators.

pub mod angmres;
pub mod bounds;
pub mod error;
pub mod gmres;
pub mod io;
pub mod iterate;
pub mod linops;
pub mod lp;
pub mod ngmres;
pub mod problems;

pub use error::{Error, Result};
pub use iterate::{ConvergenceHistory, FixedPointMap, IterationRecord, RunConfig, StepKind, Termination};
pub use ngmres::Capacity;
