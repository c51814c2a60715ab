//! Energy-minimizing bandwidth management for pre-copy live migration of virtual
//! machines over multipath TCP.
//!
//! * [`model`]: round-by-round volumes, times, energies and constraint residuals.
//! * [`power`]: per-subflow power from the congestion-control steady state and the
//!   balanced `K0·R^α` fit.
//! * [`solver`]: the iterative minimum-energy rate allocator.
//! * [`managers`]: linear-ramp and single-rate reference managers.
//! * [`offload`]: migrate-or-not budgets for a device offloading to a fog node.
//! * [`oracle`]: brute-force reference minimizer.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod managers;
pub mod model;
pub mod offload;
pub mod oracle;
pub mod par;
pub mod power;
pub mod solver;

pub use error::{Error, Result};
pub use model::{DirtyRate, EnergyReport, MigrationSpec, RateSchedule};
pub use power::{BalancedPowerModel, CcAlgorithm, ConnectionProfile, SubflowProfile};
pub use solver::{solve, solve_dynamic, DynamicEvent, EventTarget, SolveResult, SolverOptions};
