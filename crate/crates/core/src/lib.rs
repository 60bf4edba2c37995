//! Information-relay analysis of small recurrent networks.
//!
//! Trains RNN/GRU/LSTM networks on two synthetic classification tasks, then
//! locates the hidden nodes that carry each task concept, checks them with
//! knockouts, follows them through time, and relates them to PCA structure.

pub mod ablation;
pub mod error;
pub mod experiment;
pub mod infotheory;
pub mod latent;
pub mod recnet;
pub mod taskgen;
pub mod temporal;

pub use error::{Error, Result};
