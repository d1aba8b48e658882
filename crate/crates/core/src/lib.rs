//! Train small classifiers under simulated accelerator floating-point
//! behaviour and measure how the resulting parameter drift spreads across
//! protected groups.
//!
//! Layers, bottom to top:
//!
//! - [`vhw`]: virtual hardware profiles (reduction order and precision).
//! - [`numkit`]: parameter vectors, reverse-mode tape, Hessian-vector
//!   products, shifted power iteration.
//! - [`data`]: grouped datasets, synthetic generation, CSV, splits.
//! - [`models`]: logistic regression and MLPs, losses, checkpoints.
//! - [`train`]: deterministic SGD with the boundary-distance penalty.
//! - [`fairlab`]: sensitivity, fairness violation, bound decompositions.
//! - [`harness`]: config-driven sweeps, persistence, acceptance checks.

pub mod data;
pub mod error;
pub mod fairlab;
pub mod harness;
pub mod models;
pub mod numkit;
pub mod train;
pub mod vhw;

pub use error::{Error, Result};
