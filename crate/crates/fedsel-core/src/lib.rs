//! Simulation engine for federated learning with bandit-driven client
//! selection: synthetic non-IID data partitioning, local momentum training,
//! gradient-projection client scoring, a confidence-bound selector with
//! baselines, and a lab for checking the selector's regret bound.

pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod gp;
pub mod nn;
pub mod param;
pub mod regret;
pub mod seeding;
pub mod selection;

pub use error::{Error, Result};
pub use param::ParamVector;
