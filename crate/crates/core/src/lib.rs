//! Probabilistic spiking network accelerator toolkit: generalized linear
//! model neurons trained with a first-to-spike objective, post-training
//! quantization, a word-line-accurate core simulator and an analytical
//! performance model.

pub mod cli;
pub mod core_sim;
pub mod data;
pub mod engine;
pub mod error;
pub mod fts;
pub mod glm;
pub mod perf;
pub mod quant;
pub mod rng;

pub use error::{Error, Result};
