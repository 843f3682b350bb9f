//! Soft actor-critic with periodic offline critic stabilization phases,
//! high update-to-data comparators, and exact gradient-update accounting.

pub mod agent;
pub mod diagnostics;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod numcore;
pub mod replay;
pub mod schedule;

pub use error::{Error, Result};
