//! Training-speed estimators of generalisation for architecture search.
//!
//! The crate bundles:
//! - [`curves`]: learning-curve data model and the JSON-lines benchmark format
//! - [`stats`]: ranking utilities and Spearman rank correlation
//! - [`estimators`]: the TSE family, baseline estimators, the PAC-Bayes bound
//!   estimate, and the effective-training-budget procedure
//! - [`toytrain`]: a seeded from-scratch MLP trainer that generates real
//!   learning curves for an enumerable toy architecture space
//! - [`rankeval`]: the rank-correlation evaluation protocol over a benchmark
//! - [`search`]: random search, regularized evolution and a density-ratio
//!   Bayesian optimiser with simulated-runtime accounting
//! - [`diffnas`]: a toy differentiable cell with plain and training-speed
//!   driven architecture updates
//! - [`cli`]: reproducible experiment commands with manifests and reports
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod cli;
pub mod curves;
pub mod diffnas;
pub mod error;
pub mod estimators;
pub mod rankeval;
pub mod search;
pub mod seeding;
pub mod stats;
pub mod svg;
pub mod toytrain;

pub use error::{Error, Result};
