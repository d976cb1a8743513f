//! Goal-oriented sensing schedules for collaborative ISAC networks.
//!
//! Devices sense a target and upload features to a fusion centre that
//! classifies it. Sensing time is taken away from the devices' broadband
//! traffic and costs energy, so each device senses only in a random subset of
//! cycles. The crate designs those schedules (probabilities or joint moments,
//! plus sensing powers) to maximize the discriminant gain at the fusion centre
//! under rate, energy and feature-time constraints, and simulates the result.
//!
//! * [`model`]: class statistics, discriminant gains, policies
//! * [`network`]: rates, energy and the constraint builders
//! * [`solver`]: independent and joint optimizers, baselines, grid search
//! * [`sampler`]: Ising and dichotomized-Gaussian schedule generators
//! * [`sim`]: scenarios, Monte Carlo simulation, classifier proxy, sweeps
//! * [`cli`]: configuration files and the command implementations

pub mod cli;
pub mod error;
pub mod linalg;
pub mod model;
pub mod network;
pub mod sampler;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
