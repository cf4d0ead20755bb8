//! Finite-horizon stochastic optimal control with per-stage CVaR safety
//! constraints.
//!
//! The safety loss at stage `t + 1` is the distance of the state to a safe
//! interval `A`, and each stage requires `CVaR_α[dist(x_{t+1}, A) | x_t] <= δ`.
//! Writing CVaR through its extremal formula turns the constraint into an
//! ordinary expectation constraint, and with a finite disturbance support the
//! inner distance minimization reduces to a projection. What remains at each
//! grid state is a one-dimensional convex program in the control, solved in
//! [`bellman`] and chained backward in [`dp`].
//!
//! States with finite value at stage `t` form the risk-constrained safe set;
//! [`probsafe`] compares those sets with classical probabilistic safe sets,
//! and [`sim`] audits solved policies by simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bellman;
pub mod dp;
pub mod error;
pub mod model;
pub mod probsafe;
pub mod risk;
pub mod search;
pub mod sim;
pub mod value;

pub use bellman::{admissible_controls, feasible_control_interval, stage_solve, StageSolution};
pub use dp::{backward_solve, risk_constrained_safe_set, value_at, PolicyEntry, PolicyTable, SolveResult};
pub use error::{Error, Result};
pub use model::{
    normal_samples, CostSpec, IntervalSet, ProblemConfig, RiskSpec, StateGrid, SystemModel,
};
pub use probsafe::{
    check_inclusions, probabilistic_safe_set, safety_probability_dp, InclusionCheck,
    InclusionReport, SafetyProbTable,
};
pub use risk::{cvar, cvar_with_argmin, safety_loss_cvar, set_distance, value_at_risk, LossSample};
pub use sim::{audit_constraints, evaluate, rollout, ConditionalAudit, Rollout, SimReport};
pub use value::{convex_envelope, ValueTable};
