//! Retention prediction for free-to-play game telemetry.
//!
//! The pipeline: ingest raw install/session/round event logs
//! ([`telemetry`]), compute per-player feature vectors over configurable
//! feature windows and attach retention labels ([`featurize`]), train
//! heuristic rule trees and classifier benchmarks ([`learners`]), and
//! evaluate with shared-partition cross-validation plus a nearest-neighbor
//! perturbation robustness protocol ([`evaluation`]). A seedable synthetic
//! cohort generator ([`synthcohort`]) makes the whole thing runnable
//! without proprietary data.

pub mod error;
pub mod evaluation;
pub mod featurize;
pub mod learners;
pub mod synthcohort;
pub mod telemetry;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::RetainError;
