//! Solver and simulator for the user-algorithm engagement game.
//!
//! Users with known per-content engagement rates and rewards commit to
//! engagement (and, optionally, costly-signal) strategies; an
//! engagement-maximizing algorithm best responds from its posterior over
//! user types. This crate provides the exact closed forms of that best
//! response (a linear classifier over posteriors), the user-side
//! equilibrium strategies with and without costly signaling, brute-force
//! oracles validating every closed form, and a seeded session simulator
//! for undiscounted value and regret curves.
//!
//! All numeric code is generic over the scalar type through
//! [`scalar::Real`]; the `*64` aliases below pin the common `f64` case.

pub mod algo_policy;
pub mod belief;
pub mod domain;
pub mod equilibrium;
pub mod fixtures;
pub mod oracle;
pub mod sampling;
pub mod scalar;
pub mod simulator;

pub use scalar::Real;

pub type Scenario64 = domain::Scenario<f64>;
pub type Profile64 = domain::StrategyProfile<f64>;
pub type Belief64 = belief::Belief<f64>;
pub type EquilibriumResult64 = equilibrium::EquilibriumResult<f64>;
pub type SolverConfig64 = equilibrium::SolverConfig<f64>;
pub type OracleConfig64 = oracle::OracleConfig<f64>;
pub type RegretCurve64 = simulator::RegretCurve<f64>;
