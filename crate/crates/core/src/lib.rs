//! Bayes-Nash equilibrium learning for auction and contest games.
//!
//! Observation, valuation and action spaces are discretized; strategies are
//! distributional-strategy matrices; agents run simultaneous first-order
//! online updates on their expected utility, which is linear in their own
//! strategy. Convergence is certified in-game by exact best responses.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod game;
pub mod gradient;
pub mod grid;
pub mod learner;
pub mod mechanism;
pub mod presets;
pub mod prior;
pub mod runner;
pub mod sampler;
pub mod simplex;
pub mod strategy;
pub mod verify;

pub use error::{Error, Result};
pub use grid::Grid;
pub use mechanism::{LlgRule, Mechanism, MechanismKind, SplitCost};
pub use prior::{DiscretePrior, Joint};
pub use sampler::{Marginal, PriorModel, SimRng};
pub use strategy::{InitMode, Strategy};
