//! Discrete tokenization of time series with a vector-quantized autoencoder,
//! and the imputation, anomaly-detection and forecasting pipelines built on it.

pub mod autograd;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod synthetic;
pub mod tasks;
pub mod vqvae;

pub use error::{Error, Result};
