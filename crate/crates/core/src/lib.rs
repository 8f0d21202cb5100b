//! Train small networks and measure how well each node's weights exploit
//! the correlations among its inputs.
//!
//! The [`metrics`] module computes per-node SNR figures from a trained
//! [`nn::Network`] and an evaluation batch; [`experiment`] sweeps training
//! configurations and correlates the network figure with test accuracy.

pub mod datasets;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Result, SnrError};
pub use par::Execution;
pub use rng::SeededRng;
pub use tensor::Matrix;
