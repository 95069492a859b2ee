//! Discrete-event simulation and CPU-demand calibration for containerized,
//! message-driven data pipelines.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assess;
pub mod autoscale;
pub mod bench;
pub mod cfs;
pub mod cluster;
pub mod config;
pub mod demand;
pub mod error;
pub mod model;
pub mod report;
pub mod sim;
pub mod stats;
pub mod workload;

pub use error::{Error, Result};
