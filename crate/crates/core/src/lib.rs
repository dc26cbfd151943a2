//! Closed-loop level control with built-in attack detection.
//!
//! This crate implements a constrained nonlinear model predictive controller
//! whose predicted trajectories double as the reference signal of a CUSUM
//! anomaly detector. Keeping the plant's real-time output inside a small tube
//! around the controller's own earlier predictions makes false data injected
//! into the sensor or actuator channels show up as a growing residual, which
//! the detector accumulates until an alarm fires.
//!
//! Module map:
//! - [`dynamics`]: plant-model abstraction and the coupled-tanks instance.
//! - [`nmpc`]: single-shooting MPC solver with box, proximity and terminal
//!   constraints handled by an augmented-Lagrangian projected-gradient loop.
//! - [`reference`]: ring buffer holding the self-generated reference
//!   trajectory, extended each step with the solver's N-step-ahead prediction.
//! - [`detector`]: residual construction and the nonparametric CUSUM test.
//! - [`attack`]: false-data-injection signal schedules for input and output
//!   channels.
//! - [`sim`]: the closed-loop orchestration producing a per-step run log.

pub mod attack;
pub mod detector;
pub mod dynamics;
mod error;
pub mod nmpc;
pub mod reference;
pub mod sim;

pub use error::{Error, Result};

// downstream crates build weight matrices and vectors with the same version
pub use nalgebra;
