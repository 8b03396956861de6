//! Deterministic signalized-grid microsimulation with stopped-delay based
//! adaptive signal control and a parallel-simulation controller selector.

pub mod cli;
pub mod controllers;
pub mod delay;
pub mod error;
pub mod metrics;
pub mod network;
pub mod seed;
pub mod signal;
pub mod traffic;
pub mod twin;

pub use error::{Error, Result};
