//! Joint beamformer, receive-filter, power and movable-antenna position
//! design that minimizes the Cramér-Rao bound on a target's direction of
//! arrival in an uplink ISAC system while keeping the users' sum rate above
//! a threshold.
//!
//! Every block of the alternating loop is solved in closed form or through a
//! scalar secular equation, so the crate needs no convex-optimization backend.

pub mod beamformer;
pub mod channel;
pub mod config;
pub mod filters_power;
pub mod fp;
pub mod linalg;
pub mod oracles;
pub mod positions;
pub mod sensing;
pub mod solver;

pub use config::{Mode, SystemConfig};
pub use linalg::{CMatrix, CVector, LinalgError, C64};
pub use solver::{bca_solve, initialize, initialize_from_seed, IterationRecord, SolveOptions, SolverState, Termination};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsacError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scenario infeasible: {0}")]
    Infeasible(String),
    #[error("degenerate subproblem: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, IsacError>;
