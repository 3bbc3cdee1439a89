//! Constraint-composed reinforcement learning.
//!
//! Tasks are written as sets of constraint functions over states, actions
//! and timesteps. Lagrange multipliers fold them into a scalar reward that a
//! soft actor-critic learner (quantile or scalar critics) optimizes, while
//! projected dual descent adapts the multipliers from observed returns.

pub mod approx;
pub mod constraint;
pub mod envs;
pub mod error;
pub mod harness;
pub mod lagrange;
pub mod mdp;
pub mod optim;
pub mod trainer;

pub use constraint::{make_constraint, ConstraintFn, ConstraintKind, ConstraintParams, SignalRegistry};
pub use error::{Error, Result};
pub use lagrange::{init_multipliers, multiplier_gradient, scalarize, update_multipliers, LagrangeState};
pub use mdp::{constraint_returns, discounted_return, rollout, Environment, ProblemSpec, RewardMode, Trajectory, Transition};
