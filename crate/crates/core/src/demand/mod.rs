//! Calibrated CPU demand: live busy-work generation and the simulated
//! execution-time model.

mod calibration;
mod kernel;
mod variability;

pub use calibration::{
    burn_cpu, calibrate_live, calibrate_with, iterations_for, Accuracy, CalibrationRow, CalibrationTable,
    FIT_MIN_TIME_MS, WARMUP_RUNS,
};
pub use kernel::{busy_work, timed_busy_work};
pub use variability::{
    fit_variability, sample_actual_ms, SlowdownShape, VariabilityModel, DETERMINISTIC, PAPER_BWCLOUD,
    PAPER_BWCLOUD_CV, PAPER_BWCLOUD_REFERENCE_PODS, PAPER_BWCLOUD_SHAPE, Z_Q1,
};

pub(crate) use calibration::csv_error;

/// One cell of the published execution-time benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublishedCell {
    pub demand_ms: f64,
    pub qos: crate::model::QosClass,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub sd: f64,
}

/// Execution time by demand parameter and QoS class, as published for the
/// seven-node cloud cluster.
pub const PUBLISHED_BENCHMARK: [PublishedCell; 6] = {
    use crate::model::QosClass::{BestEffort, Guaranteed};
    const fn cell(demand_ms: f64, qos: crate::model::QosClass, mean: f64, median: f64, p95: f64, sd: f64) -> PublishedCell {
        PublishedCell { demand_ms, qos, mean, median, p95, sd }
    }
    [
        cell(50.0, BestEffort, 52.58131, 52.248, 66.5653, 8.965577),
        cell(50.0, Guaranteed, 54.06818, 54.102, 65.8925, 8.115489),
        cell(200.0, BestEffort, 211.0581, 206.769, 254.0771, 24.69515),
        cell(200.0, Guaranteed, 214.5613, 212.349, 253.0308, 23.41644),
        cell(1000.0, BestEffort, 1042.363, 1033.147, 1155.02, 63.28705),
        cell(1000.0, Guaranteed, 1042.841, 1032.238, 1166.254, 68.88045),
    ]
};
