//! Desk-scale EIT experiments on top of `ripgn-core`: phantoms, simulated
//! data, text file formats, run orchestration and acceptance checks.

pub mod checks;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod io;
pub mod phantom;

pub use config::{LaDiag, RunConfig, Scheme, SolverKind};
pub use dataset::Dataset;
pub use error::{HarnessError, Result};
pub use experiment::{run_case, sweep, CaseReport, RunOutcome, Setup};
pub use phantom::{Inclusion, Phantom};
