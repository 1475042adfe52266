//! Simulation, optimisation and verification of budgeted sampling policies
//! for tracking a quantity that drifts as a Gaussian random walk.

pub mod binary;
pub mod config;
pub mod continuous;
pub mod error;
pub mod export;
pub mod model;
pub mod optimize;
pub mod policy;
pub mod repro;
pub mod search;
pub mod verify;
pub mod world;

pub use error::{Error, Result};
pub use model::{innovation, kalman_step, samples_to_reach, trace_cost, trace_value, ModelParams, VarianceTrace};
