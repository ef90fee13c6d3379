//! Batched nonparametric contextual bandits with dynamic binning.
//!
//! The crate simulates two-armed contextual bandits on `[0,1]^d` whose
//! policies may only update at a fixed number of batch boundaries. It ships
//! the batched successive-elimination policy with dynamic binning, its
//! planner, baseline policies, hard instance families and a seeded Monte
//! Carlo engine.

pub mod basedb;
pub mod baselines;
pub mod config;
pub mod engine;
pub mod instance;
pub mod instances;
pub mod plan;
pub mod policy;
pub mod report;
pub mod studies;
pub mod sweep;
