//! Gower-dissimilarity network intrusion detection.
//!
//! Mixed-type flow records are turned into Gower dissimilarity matrices,
//! which then feed a small MLP binary classifier trained either centrally
//! or through a simulated federated-averaging loop with optional
//! ROC-AUC based client selection.

pub mod centralized;
pub mod data;
pub mod error;
pub mod experiment;
pub mod federated;
pub mod gower;
pub mod matrix_io;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
