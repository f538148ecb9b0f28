//! Surrogate benchmark engine for cell-based neural architecture search.
//!
//! The crate models the DARTS cell search space, fits tree-ensemble surrogates
//! with predictive uncertainty to architecture-evaluation datasets, and runs
//! NAS optimizers against either a synthetic ground-truth oracle or a fitted
//! surrogate benchmark.
//!
//! Module map:
//!
//! - [`searchspace`]: genotypes, validation, sampling, mutation, enumeration
//! - [`encoding`]: categorical, unit-cube, one-hot and path encodings
//! - [`dataset`]: evaluation records, JSONL I/O, stratified and leave-one-out splits
//! - [`gbtree`]: histogram gradient boosting and random forests
//! - [`metrics`]: R², Kendall τ-b, sparse τ, MAE, Gaussian KL
//! - [`surrogate`]: the K-member benchmark with noisy queries and a runtime model
//! - [`optimizers`]: RS, RE, DE, TPE, BANANAS-lite and local search
//! - [`synth`]: the synthetic ground-truth oracle
//! - [`harness`]: experiment drivers producing reports and CSVs

pub mod dataset;
pub mod encoding;
pub mod gbtree;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod optimizers;
pub mod rng;
pub mod searchspace;
pub mod surrogate;
pub mod synth;

pub use rng::SimRng;
pub use searchspace::{Cell, CellKind, Edge, Genotype, Operation, SpaceConfig};
