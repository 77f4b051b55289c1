pub mod bounds;
pub mod cli;
pub mod config;
pub mod continuity;
mod error;
pub mod metrics;
pub mod mollifier;
pub mod planner;
pub mod potentials;
pub mod quadrature;
pub mod rng;
pub mod samplers;
pub mod verify;

pub use error::{Error, Result};
