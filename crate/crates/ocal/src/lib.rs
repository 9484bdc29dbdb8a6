//! Active learning for outlier detection with one-class classifiers.
//!
//! The crate provides the building blocks of a one-class active learning
//! system and a benchmark harness that combines them:
//!
//! - [`data`]: dataset loading, normalization, resampling, label pools and
//!   train/test splits
//! - [`kernel`]: RBF kernel, Gram matrix cache and hyperparameter heuristics
//! - [`learners`]: SVDD, SVDDneg and SSAD fitted through a working-set dual
//!   solver, exposing the hypersphere decision function
//! - [`density`]: Gaussian kernel density estimation with leave-one-out
//!   evaluation
//! - [`strategies`]: the ten query strategies and the feasibility rules that
//!   couple them to pools and splits
//! - [`metrics`]: confusion-matrix and ranking metrics plus progress-curve
//!   summaries
//! - [`config`] / [`harness`]: experiment grids, the feedback loop, result
//!   persistence and aggregation
//!
//! The `ocal` CLI in this workspace drives the harness from a declarative
//! grid file.

pub mod config;
pub mod data;
pub mod density;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod learners;
pub mod matrix;
pub mod metrics;
pub mod strategies;

pub use error::{Error, Result};
pub use matrix::Matrix;
