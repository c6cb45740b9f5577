//! Simulation harness for the comparison of hold-out data splitting with
//! additive Gaussian randomisation: reproducible data generation, the four
//! Monte Carlo studies (selection power, selection stability, coefficient
//! coverage, projection coverage), an empirical check of the conditional
//! central limit theorem for the randomised pivot, and a verifier for the
//! Fisher-information inequality.
//!
//! Every experiment is driven by an [`config::ExperimentConfig`] and returns
//! summary statistics together with [`table::ResultTable`]s ready for CSV
//! emission. Replications fan out across worker threads; each replication
//! owns an rng stream derived by hashing (seed, cell, replication, attempt),
//! so results are byte-identical for any worker count.

pub mod betagen;
pub mod config;
pub mod error;
pub mod experiments;
pub mod streams;
pub mod table;

pub use config::{ConfigPatch, Experiment, ExperimentConfig, Selector};
pub use error::{SimError, SimResult};
