//! Evaluation harness for metacognitive prompting and chain-of-thought
//! baselines on natural-language-understanding benchmarks.
//!
//! The pipeline is split into modules that mirror its stages:
//!
//! - [`catalog`]: task specs, dataset loading, seeded subsets and exemplars
//! - [`prompt`]: strategy templates, rendering and decoding parameters
//! - [`backend`]: model gateway with an HTTP chat-completion client, a
//!   scripted fixture backend, an on-disk response cache and retries
//! - [`parse`]: answer, confidence and stage extraction from model output
//! - [`scoring`]: self-consistency voting and the task metrics
//! - [`analysis`]: calibration matrix, model averages, relative improvement
//!   and error-category distributions
//! - [`run`]: run configs, resumable execution and report generation

pub mod analysis;
pub mod backend;
pub mod catalog;
pub mod parse;
pub mod prompt;
pub mod run;
pub mod scoring;

use sha2::{Digest, Sha256};

pub use catalog::{builtin_catalog, Answer, Instance, TaskSpec};
pub use prompt::{PromptBundle, StrategyId};

/// Lowercase hex SHA-256 of `bytes`.
pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Round to one decimal, halves away from zero.
///
/// Inputs are usually means of one-decimal percentages, whose binary
/// representation can sit a hair below the half. The nudge restores the
/// decimal tie before rounding.
pub fn round1(x: f64) -> f64 {
    let scaled = x * 10.0;
    let nudged = scaled + scaled.signum() * 1e-9;
    nudged.round() / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round1_half_away_from_zero() {
        assert_eq!(round1(92.65), 92.7);
        assert_eq!(round1(91.175), 91.2);
        assert_eq!(round1(-0.25), -0.3);
        assert_eq!(round1(66.666_666), 66.7);
        assert_eq!(round1(0.0), 0.0);
        assert_eq!(round1(100.0), 100.0);
    }
}
