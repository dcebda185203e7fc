//! Non-homogeneous hidden Markov model for hourly rainfall.
//!
//! Dry hours are split across clone states with distinct, time-varying
//! persistence; rainfall depths follow a zero-inflated, discretised GPD whose
//! parameters vary smoothly with season and calendar time.

pub mod calendar;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod generator;
pub mod inference;
pub mod io;
pub mod model;
pub mod spline;
pub mod stats;
pub mod synthetic;
pub mod workflow;

pub use error::{Error, Result};
