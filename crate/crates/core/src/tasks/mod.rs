//! Task engines built on a trained tokenizer.

pub mod ablation;
pub mod anomaly;
pub mod forecast;
pub mod imputation;
