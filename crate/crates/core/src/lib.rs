//! Approximate Nash equilibria for large nonconvex sum-aggregative
//! (congestion-type) games.
//!
//! The pipeline implemented here:
//! - [`game`] describes a congestion game with finite action sets and builds
//!   the auxiliary game in which each player's own price contribution is
//!   frozen at an anchor point,
//! - [`envelope`] computes convex envelopes of the tabulated local costs,
//!   with generator points and simplex weights as witnesses,
//! - [`solver`] runs a cyclic gradient-proximal scheme on the convexified
//!   auxiliary game and certifies the returned iterate by its step norm,
//! - [`disagg`] recovers feasible (nonconvex) strategies from a convexified
//!   profile, either by Shapley-Folkman purification and rounding or by
//!   randomized per-player sampling,
//! - [`metrics`] measures equilibrium quality by exhaustive best responses,
//! - [`ev`] generates the electric-vehicle charging benchmark and drives the
//!   whole pipeline over grids of player counts and iteration budgets.
//!
//! All randomness flows through seeded ChaCha8 generators derived from a
//! master seed (see [`seed`]), so every artifact is reproducible.

pub mod disagg;
pub mod envelope;
pub mod error;
pub mod ev;
pub mod func;
pub mod game;
pub mod linalg;
pub mod metrics;
pub mod seed;
mod simplex;
pub mod solver;

pub use disagg::{sf_disaggregate, randomized_disaggregate, DisaggregationResult, MixedProfile};
pub use envelope::{caratheodory_reduce, Envelope, GeneratorWitness};
pub use error::{Error, Result};
pub use func::FunctionSpec;
pub use game::{AuxiliaryGame, Feasibility, Game, GameConstants, Profile};
pub use metrics::EquilibriumReport;
pub use solver::{InitStrategy, SolveReport, SolverConfig};
