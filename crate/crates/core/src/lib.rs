//! Evaluation harness for visual counterfactual explanations.
//!
//! The crate computes distance, validity, auto-encoder, Fréchet, label
//! variation and oracle metrics from file-based model outputs, assembles them
//! into comparable reports, and ships a deterministic synthetic benchmark
//! world for exercising every metric without trained networks.

pub mod data;
pub mod io;
pub mod kahan;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod stats;
pub mod synth;
