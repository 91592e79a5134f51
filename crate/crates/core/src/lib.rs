//! Core library for preference-shaped peer-to-peer energy exchange in a
//! network of interconnected microgrids.
//!
//! The day-ahead dispatch of the whole network is a convex program: each
//! microgrid carries fuel generators, storage units and fixed net loads on a
//! radial internal network modeled with branch-flow (DistFlow) equations and
//! a second-order-cone relaxation of the current equality. Bilateral trades
//! between microgrids are penalized by a preference matrix scaled to prices,
//! which lets an operator shape which exchanges actually occur.
//!
//! The problem can be solved two ways, sharing the identical constraint
//! builders:
//!
//! * [`central`] concatenates every agent's block plus explicit coupling
//!   equalities into one monolithic program (the reference path);
//! * [`consensus`] runs the distributed loop: per-agent solves against
//!   consensus targets, averaging updates, and scaled dual ascent, with
//!   agents revealing only shared quantities.
//!
//! The crate is `no_std`-compatible (alloc required); the actual conic
//! solves are delegated through the [`program::ConicSolver`] trait so the
//! numerical backend lives with the host application.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod central;
pub mod consensus;
pub mod devices;
pub mod ieee33;
pub mod local;
pub mod network;
pub mod preference;
pub mod program;
pub mod scenario;
pub mod trace;

mod math;

pub use central::{solve_centralized, CentralizedSolution, MonolithicProgram};
pub use consensus::{run_admm, AdmmParams, AdmmState, AgentMessage};
pub use devices::{fg_cost, storage_step, FuelGenerator, StorageUnit};
pub use preference::{normalize_row, preference_cost, PreferenceMatrix};
pub use program::{ConicSolver, QuadProgram, SolveOutcome, Solution, SolverPool, VarId};
pub use scenario::{
    validate_scenario, KappaSpec, LineSegment, MicrogridModel, Mode, PriceSeries, Scenario,
};
pub use trace::{detect_clusters, SolutionTrace};
