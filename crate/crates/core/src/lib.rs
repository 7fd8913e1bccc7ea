//! Multitime quantum noise: process tensors built from system–environment
//! dynamics, information monotones, dynamical-decoupling controls, and the
//! optimizer and sweep harness on top of them.

pub mod control;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod monotones;
pub mod optimizer;
pub mod process;
pub mod random;

pub use error::{Error, Result};
