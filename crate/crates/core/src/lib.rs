//! Desk-scale pedestrian automatic emergency braking (PAEB) pipeline:
//! scripted scenario simulation, synthetic camera/radar sensing, a
//! template-correlation pedestrian detector with an out-of-distribution
//! safety cage, and the evaluation/testing/safety-case tooling around it.

pub mod cage;
pub mod catalog;
pub mod dataset;
pub mod datatest;
pub mod error;
pub mod kinematics;
pub mod metrics;
pub mod cli;
pub mod perception;
pub mod pipeline;
pub mod safetycase;
pub mod sensors;
pub mod sim;
pub mod systest;

pub use error::{Error, Result};
