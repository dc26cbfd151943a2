//! Command-line front end for the levelguard closed-loop simulator.
//!
//! Scenario files are TOML documents describing the plant, controller,
//! detector, noise, attack schedule and run length; missing keys take the
//! documented defaults, so an empty file is the attack-free fill experiment.
//! Runs write a per-step CSV log plus a text summary; batches add an
//! aggregate CSV over all scenarios.

pub mod commands;
pub mod output;
pub mod scenario;
