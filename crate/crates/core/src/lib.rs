//! Fairness-aware training for two-domain implicit-feedback recommendation.
//!
//! The crate bundles group-aware negative sampling driven by smoothed group
//! losses, redistribution of estimated cross-domain information gain across
//! user groups, full-ranking evaluation with group-gap metrics, and numerical
//! checks of Wasserstein/Rademacher fairness bounds on embedding snapshots.

pub mod backbone;
pub mod dataset;
pub mod error;
pub mod gain;
pub mod kv;
pub mod metrics;
pub mod optim;
pub mod sampler;
pub mod seed;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
