//! Calibration of the busy-work kernel against wall time.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::kernel::timed_busy_work;
use crate::error::{Error, Result};
use crate::stats::median;

/// Rows shorter than this are dominated by timer and loop overhead.
pub const FIT_MIN_TIME_MS: f64 = 4.0;
pub const WARMUP_RUNS: usize = 5;
const MONOTONE_RETRIES: usize = 3;
const PROBE_START_ITERATIONS: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Accuracy {
    Low,
    Medium,
    High,
}

impl Accuracy {
    pub fn repetitions(self) -> usize {
        match self {
            Accuracy::Low => 1,
            Accuracy::Medium => 3,
            Accuracy::High => 7,
        }
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Accuracy::Low => "low",
            Accuracy::Medium => "medium",
            Accuracy::High => "high",
        })
    }
}

impl FromStr for Accuracy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Accuracy::Low),
            "medium" => Ok(Accuracy::Medium),
            "high" => Ok(Accuracy::High),
            other => Err(Error::Domain(format!("unknown accuracy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub time_ms: f64,
    pub iterations: u64,
    pub time_per_iteration: f64,
}

impl CalibrationRow {
    pub fn new(time_ms: f64, iterations: u64) -> Self {
        Self {
            time_ms,
            iterations,
            time_per_iteration: time_ms / iterations as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    rows: Vec<CalibrationRow>,
    fitted_rate_ms_per_iter: f64,
    accuracy: Accuracy,
}

impl CalibrationTable {
    /// Builds a table from (time, iterations) rows and fits the rate as the
    /// median time per iteration over rows of at least 4 ms (all rows when
    /// none are that long).
    pub fn from_rows(rows: Vec<CalibrationRow>, accuracy: Accuracy) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("calibration table has no rows".into()));
        }
        for pair in rows.windows(2) {
            if !(pair[1].time_ms >= pair[0].time_ms) || pair[1].iterations <= pair[0].iterations {
                return Err(Error::CalibrationUnstable(format!(
                    "rows must ascend in time and iterations: ({}, {}) then ({}, {})",
                    pair[0].time_ms, pair[0].iterations, pair[1].time_ms, pair[1].iterations
                )));
            }
        }
        let mut ratios: Vec<f64> = rows
            .iter()
            .filter(|r| r.time_ms >= FIT_MIN_TIME_MS)
            .map(|r| r.time_per_iteration)
            .collect();
        if ratios.is_empty() {
            ratios = rows.iter().map(|r| r.time_per_iteration).collect();
        }
        let rate = median(&mut ratios);
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::CalibrationUnstable(format!("fitted rate {rate} is not positive")));
        }
        Ok(Self {
            rows,
            fitted_rate_ms_per_iter: rate,
            accuracy,
        })
    }

    pub fn rows(&self) -> &[CalibrationRow] {
        &self.rows
    }

    pub fn fitted_rate(&self) -> f64 {
        self.fitted_rate_ms_per_iter
    }

    pub fn accuracy(&self) -> Accuracy {
        self.accuracy
    }

    /// Relative spread (max/min - 1) of time per iteration over rows of at
    /// least 4 ms.
    pub fn ratio_spread(&self) -> Option<f64> {
        let ratios: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.time_ms >= FIT_MIN_TIME_MS)
            .map(|r| r.time_per_iteration)
            .collect();
        if ratios.is_empty() {
            return None;
        }
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(hi / lo - 1.0)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["time_ms", "iterations", "time_per_iteration"])
            .map_err(|e| csv_error(path, e))?;
        for row in &self.rows {
            w.write_record([
                format!("{:.6}", row.time_ms),
                row.iterations.to_string(),
                format!("{:.6e}", row.time_per_iteration),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, accuracy: Accuracy) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["time_ms", "iterations", "time_per_iteration"] {
            return Err(Error::format(path, format!("unexpected header {headers:?}")));
        }
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let time_ms: f64 = parse_field(path, &record, 0)?;
            let iterations: u64 = parse_field(path, &record, 1)?;
            rows.push(CalibrationRow::new(time_ms, iterations));
        }
        Self::from_rows(rows, accuracy)
    }
}

fn parse_field<T: FromStr>(path: &Path, record: &csv::StringRecord, idx: usize) -> Result<T>
where
    T::Err: fmt::Display,
{
    let raw = record.get(idx).unwrap_or_default();
    raw.trim()
        .parse()
        .map_err(|e| Error::format(path, format!("column {idx}: `{raw}`: {e}")))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Iteration count that should take `demand_ms` on the calibrated host.
pub fn iterations_for(demand_ms: f64, table: &CalibrationTable) -> u64 {
    if !(demand_ms > 0.0) {
        return 0;
    }
    (demand_ms / table.fitted_rate()).round() as u64
}

/// Burns `demand_ms` of CPU on the calling thread and returns the measured
/// wall time in milliseconds.
pub fn burn_cpu(demand_ms: f64, table: &CalibrationTable) -> f64 {
    timed_busy_work(iterations_for(demand_ms, table))
}

/// Calibrates the real kernel on this host.
pub fn calibrate_live(accuracy: Accuracy, max_target_ms: f64) -> Result<CalibrationTable> {
    calibrate_with(accuracy, max_target_ms, timed_busy_work)
}

/// Calibration loop over an arbitrary timing function (`iterations -> ms`).
///
/// After five discarded warm-up runs, a probe finds an iteration count
/// taking about 1 ms. Each following row doubles the count until a row
/// reaches `max_target_ms`. A row's time is the median over the
/// accuracy's repetitions. A row no slower than its predecessor is
/// re-measured a few times before the calibration is declared unstable.
pub fn calibrate_with(
    accuracy: Accuracy,
    max_target_ms: f64,
    mut measure: impl FnMut(u64) -> f64,
) -> Result<CalibrationTable> {
    if !(max_target_ms >= 1.0) {
        return Err(Error::Domain(format!("max_target_ms must be >= 1, got {max_target_ms}")));
    }
    for _ in 0..WARMUP_RUNS {
        measure(PROBE_START_ITERATIONS);
    }

    let mut n = PROBE_START_ITERATIONS;
    loop {
        let t = measure(n);
        if t >= 1.0 {
            break;
        }
        let factor = if t > 0.0 { (1.05 / t).clamp(2.0, 64.0) } else { 64.0 };
        n = (n as f64 * factor).ceil() as u64;
        if n > 1 << 50 {
            return Err(Error::CalibrationUnstable("timer never reached 1 ms".into()));
        }
    }

    let reps = accuracy.repetitions();
    let mut measure_row = |n: u64| {
        let mut samples: Vec<f64> = (0..reps).map(|_| measure(n)).collect();
        median(&mut samples)
    };

    let mut rows = vec![CalibrationRow::new(measure_row(n), n)];
    while rows.last().is_none_or(|r| r.time_ms < max_target_ms) {
        let prev = *rows.last().unwrap();
        let next_n = prev.iterations * 2;
        let mut attempt = 0;
        let row = loop {
            let t = measure_row(next_n);
            if t > prev.time_ms {
                break CalibrationRow::new(t, next_n);
            }
            attempt += 1;
            if attempt > MONOTONE_RETRIES {
                return Err(Error::CalibrationUnstable(format!(
                    "{next_n} iterations measured {t:.3} ms, not slower than {:.3} ms for {}",
                    prev.time_ms, prev.iterations
                )));
            }
        };
        rows.push(row);
    }
    CalibrationTable::from_rows(rows, accuracy)
}
