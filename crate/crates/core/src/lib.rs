//! Fairness auditing for speech-based cognitive-impairment classifiers.

pub mod classifiers;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod features;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod signal;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
