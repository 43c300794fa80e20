//! Disentangled transformers on graph connectivity.
//!
//! Graphs and their ground truth live in [`graphs`]; the model, its gradients
//! and the channel/equivariance diagnostics build on top; [`experiments`]
//! wires them into training runs, probes and sweeps.

pub mod channels;
pub mod equivariance;
pub mod error;
pub mod experiments;
pub mod grad;
pub mod graphs;
pub mod matrix;
pub mod model;
mod par;
pub mod perm;
pub mod seed;

pub use error::{Error, Result};
pub use graphs::Graph;
pub use matrix::Matrix;
pub use model::{ModelParams, Mode};
