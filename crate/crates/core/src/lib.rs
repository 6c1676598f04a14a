//! Depth-differential contrastive regularization of depth-estimation
//! features, with a synthetic benchmark to exercise it end to end.

pub mod cli;
pub mod error;
pub mod evalmetrics;
pub mod identify;
pub mod regloss;
pub mod sampling;
pub mod tensorgrid;
pub mod toybench;
pub mod verify;

pub use error::{Error, Result};
