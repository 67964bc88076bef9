//! Sparse Bayesian LSTM training with automatic relevance determination,
//! a point-estimate LSTM baseline and the evaluation utilities around them.

pub mod ard;
pub mod ard_lstm;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod lstm;
pub mod numerics;
pub mod optim;

pub use error::{Error, Result};
pub use numerics::Matrix;
