//! LadderNet: a chain of U-Nets with sum skips and shared-weights residual blocks,
//! on a small from-scratch tensor engine with reverse-mode autodiff.

pub mod config;
pub mod data;
pub mod error;
pub mod ladder;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
