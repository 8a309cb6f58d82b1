//! Solvers for finite Markov decision processes under risk-sensitive criteria built
//! from optimized certainty equivalents (OCEs).
//!
//! * [`oce`]: OCE, certainty-equivalent, entropic and CVaR evaluation.
//! * [`mdp`] and [`io`]: the model type, validation, chain analysis and JSON files.
//! * [`neutral`]: risk-neutral value/policy iteration, Q-learning, average reward.
//! * [`recursive`]: the nested criterion `max_a r + beta S_u(V(X_1))`.
//! * [`augmented`]: the OCE of the total discounted reward on an augmented state space.
//! * [`ergodic`]: long-run entropic cost via the multiplicative Poisson equation.
//! * [`simulate`]: seeded Monte-Carlo rollouts and risk-functional estimators.
//!
//! Every solver is generic over [`Real`] (`f32` or `f64`); the aliases below fix `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augmented;
pub mod ergodic;
pub mod error;
pub mod fixtures;
pub mod io;
mod linalg;
pub mod mdp;
pub mod neutral;
pub mod oce;
pub mod random;
pub mod recursive;
pub mod report;
pub mod scalar;
pub mod simulate;

pub use error::{Error, Result};
pub use mdp::{StagePolicy, StationaryPolicy};
pub use report::SolveReport;
pub use scalar::Real;

pub type Mdp = mdp::FiniteMdp<f64>;
pub type Distribution = oce::DiscreteDistribution<f64>;
pub type Utility = oce::UtilitySpec<f64>;
pub type Choice = mdp::Choice<f64>;
pub type ValueFunction = mdp::ValueFunction<f64>;
pub type QTable = neutral::QTable<f64>;
pub type AverageSolution = neutral::AverageSolution<f64>;
pub type AugmentedGrid = augmented::AugmentedGrid<f64>;
pub type AugmentedValueFunction = augmented::AugmentedValueFunction<f64>;
pub type TotalOceSolution = augmented::TotalOceSolution<f64>;
pub type ErgodicSolution = ergodic::ErgodicSolution<f64>;
pub type RolloutBatch = simulate::RolloutBatch<f64>;
