//! Distributed evolution strategies for black-box policy and parameter
//! optimization.
//!
//! The optimizer perturbs a parameter vector with Gaussian noise drawn from
//! a pregenerated table shared by every process, evaluates the perturbed
//! candidates (antithetic pairs), and ascends a rank-shaped score-function
//! gradient estimate. Because the table is common knowledge, workers
//! exchange only `(offset, sign, return)` scalars per evaluation; each node
//! reconstructs the perturbations and folds an identical update.
//!
//! Module map:
//!
//! - [`noise`]: the shared table and compact perturbation handles
//! - [`estimator`]: fitness shaping, gradient combination, updates
//! - [`policy`]: deterministic MLP policies with virtual batch norm
//! - [`envs`]: desk-scale environments and episode capping
//! - [`wire`] and [`distrib`]: framed binary protocol, coordinator, workers

pub mod digest;
pub mod distrib;
pub mod envs;
pub mod error;
pub mod estimator;
pub mod noise;
pub mod policy;
pub mod rng;
pub mod wire;

pub use error::{Error, Result};
