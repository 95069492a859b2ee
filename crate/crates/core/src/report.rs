//! File exports for simulation runs, capacity searches and live benchmarks.
//!
//! Timestamps derived from simulated microseconds are written as
//! milliseconds with exactly three decimals so they read back without loss.
//! Every other float goes through [`format_sig`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assess::NamedCapacity;
use crate::autoscale::ScalingEvent;
use crate::demand::csv_error;
use crate::error::{Error, Result};
use crate::model::{MetricSample, NodeSpec, QosClass, SimTime};
use crate::sim::{MeasurementSpan, ResponseSample, RunCounts, RunReport, Unfinished};
use crate::stats::{correlate, cv_from_moments, round_significant, summarize_values, CorrelationMethod};

pub const SIGNIFICANT_DIGITS: usize = 6;

pub const RESPONSES_FILE: &str = "responses.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SCALING_EVENTS_FILE: &str = "scaling_events.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CAPACITY_SUMMARY_FILE: &str = "capacity.json";

const RESPONSES_HEADER: [&str; 4] = ["msg_id", "created_ms", "completed_ms", "response_ms"];
const METRICS_HEADER: [&str; 4] = ["time_ms", "name", "labels", "value"];
const CAPACITY_HEADER: [&str; 4] = ["devices", "p95_ms", "pass", "seed"];
const BENCHMARK_HEADER: [&str; 7] = ["node", "qos", "demand_ms", "execution", "iteration", "measured_ms", "warmup"];
const BENCH_SUMMARY_HEADER: [&str; 8] = ["node", "qos", "demand_ms", "mean", "median", "p95", "sd", "cv"];

/// Formats `value` with six significant digits, trailing zeros removed.
/// Plain decimal notation is used for decimal exponents in `[-5, 15)`.
pub fn format_sig(value: f64) -> String {
    if value == 0.0 {
        return "0".into();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, value);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };

    if !(-5..15).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        return if tail.is_empty() {
            format!("{sign}{head}e{exp}")
        } else {
            format!("{sign}{head}.{tail}e{exp}")
        };
    }
    let mut out = String::from(sign);
    if exp < 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        out.push_str(digits);
    } else {
        let int_len = exp as usize + 1;
        if digits.len() <= int_len {
            out.push_str(digits);
            out.extend(std::iter::repeat_n('0', int_len - digits.len()));
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    }
    out
}

/// Microseconds as milliseconds with exactly three decimals.
pub fn format_ms(us: SimTime) -> String {
    format!("{}.{:03}", us / 1000, us % 1000)
}

/// Inverse of [`format_ms`]; accepts up to three decimals.
pub fn parse_ms(text: &str) -> Option<SimTime> {
    let (whole, frac) = text.split_once('.').unwrap_or((text, ""));
    if whole.is_empty() || frac.len() > 3 || !whole.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: u64 = whole.parse().ok()?;
    let frac: u64 = if frac.is_empty() { 0 } else { format!("{frac:0<3}").parse().ok()? };
    whole.checked_mul(1000)?.checked_add(frac)
}

/// Rounds every float in a JSON tree to six significant digits.
pub fn round_json_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let rounded = round_significant(n.as_f64().unwrap(), SIGNIFICANT_DIGITS);
            if let Some(r) = serde_json::Number::from_f64(rounded) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json_floats),
        Value::Object(map) => map.values_mut().for_each(round_json_floats),
        _ => {}
    }
}

fn write_json(path: &Path, value: &impl Serialize, round: bool) -> Result<()> {
    let mut tree = serde_json::to_value(value).map_err(|e| Error::format(path, e))?;
    if round {
        round_json_floats(&mut tree);
    }
    let mut text = serde_json::to_string_pretty(&tree).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<fs::File>> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    Ok(w)
}

fn csv_records(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let found = r.headers().map_err(|e| csv_error(path, e))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::format(path, format!("expected header {}", header.join(","))));
    }
    r.records()
        .map(|rec| rec.map_err(|e| csv_error(path, e)))
        .collect()
}

fn field(record: &csv::StringRecord, idx: usize) -> &str {
    record.get(idx).unwrap_or_default()
}

fn parse_num<T: std::str::FromStr>(path: &Path, record: &csv::StringRecord, idx: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = field(record, idx);
    raw.parse()
        .map_err(|e| Error::format(path, format!("line {}: column {idx}: `{raw}`: {e}", line_of(record))))
}

fn parse_time(path: &Path, record: &csv::StringRecord, idx: usize) -> Result<SimTime> {
    let raw = field(record, idx);
    parse_ms(raw).ok_or_else(|| {
        Error::format(path, format!("line {}: column {idx}: `{raw}` is not a millisecond value", line_of(record)))
    })
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub sd: f64,
}

impl ResponseStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let summary = summarize_values(values).ok()?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            n: summary.n,
            mean: summary.mean,
            median: summary.median,
            p95: summary.p95,
            p99: crate::stats::percentile_sorted(&sorted, 99.0),
            sd: summary.sd,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct UnfinishedRecord {
    msg_id: u64,
    created_ms: f64,
    dropped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunSummary {
    seed: u64,
    span: MeasurementSpan,
    horizon_ms: f64,
    counts: RunCounts,
    response_ms: Option<ResponseStats>,
    unfinished: Vec<UnfinishedRecord>,
}

/// Writes `responses.csv`, `summary.json`, `scaling_events.jsonl` and
/// `metrics.csv` into `dir`, creating it if needed.
pub fn write_run_report(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(RESPONSES_FILE);
    let mut w = csv_writer(&path, &RESPONSES_HEADER)?;
    for r in &report.responses {
        w.write_record([
            r.msg_id.to_string(),
            format_ms(r.created),
            format_ms(r.completed),
            format_ms(r.completed - r.created),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    // Millisecond values in the summary are exact multiples of 1 µs and are
    // kept unrounded so that the report reads back unchanged.
    let summary = RunSummary {
        seed: report.seed,
        span: report.span,
        horizon_ms: report.horizon as f64 / 1000.0,
        counts: report.counts,
        response_ms: ResponseStats::of(&report.response_times_ms()).map(|s| ResponseStats {
            mean: round_significant(s.mean, SIGNIFICANT_DIGITS),
            median: round_significant(s.median, SIGNIFICANT_DIGITS),
            p95: round_significant(s.p95, SIGNIFICANT_DIGITS),
            p99: round_significant(s.p99, SIGNIFICANT_DIGITS),
            sd: round_significant(s.sd, SIGNIFICANT_DIGITS),
            ..s
        }),
        unfinished: report
            .unfinished
            .iter()
            .map(|u| UnfinishedRecord {
                msg_id: u.msg_id,
                created_ms: u.created as f64 / 1000.0,
                dropped: u.dropped,
            })
            .collect(),
    };
    write_json(&dir.join(SUMMARY_FILE), &summary, false)?;

    let path = dir.join(SCALING_EVENTS_FILE);
    let mut text = String::new();
    for event in &report.scaling_events {
        let line = serde_json::to_string(event).map_err(|e| Error::format(&path, e))?;
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let path = dir.join(METRICS_FILE);
    let mut w = csv_writer(&path, &METRICS_HEADER)?;
    for m in &report.metrics {
        w.write_record([
            format_ms(m.time),
            m.name.clone(),
            format_labels(&m.labels),
            format_sig(m.value),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Reads the files written by [`write_run_report`].
pub fn read_run_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join(RESPONSES_FILE);
    let mut responses = Vec::new();
    for rec in csv_records(&path, &RESPONSES_HEADER)? {
        responses.push(ResponseSample {
            msg_id: parse_num(&path, &rec, 0)?,
            created: parse_time(&path, &rec, 1)?,
            completed: parse_time(&path, &rec, 2)?,
        });
    }

    let summary: RunSummary = read_json(&dir.join(SUMMARY_FILE))?;
    let to_us = |ms: f64| (ms * 1000.0).round() as SimTime;

    let path = dir.join(SCALING_EVENTS_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut scaling_events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: ScalingEvent =
            serde_json::from_str(&line).map_err(|e| Error::format(&path, format!("line {}: {e}", i + 1)))?;
        scaling_events.push(event);
    }

    let path = dir.join(METRICS_FILE);
    let mut metrics = Vec::new();
    for rec in csv_records(&path, &METRICS_HEADER)? {
        metrics.push(MetricSample {
            time: parse_time(&path, &rec, 0)?,
            name: field(&rec, 1).to_string(),
            labels: parse_labels(field(&rec, 2))
                .ok_or_else(|| Error::format(&path, format!("line {}: malformed labels", line_of(&rec))))?,
            value: parse_num(&path, &rec, 3)?,
        });
    }

    Ok(RunReport {
        seed: summary.seed,
        span: summary.span,
        horizon: to_us(summary.horizon_ms),
        responses,
        unfinished: summary
            .unfinished
            .iter()
            .map(|u| Unfinished {
                msg_id: u.msg_id,
                created: to_us(u.created_ms),
                dropped: u.dropped,
            })
            .collect(),
        scaling_events,
        metrics,
        counts: summary.counts,
    })
}

/// `k=v;k=v` in key order.
pub fn format_labels(labels: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (i, (k, v)) in labels.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        let _ = write!(out, "{k}={v}");
    }
    out
}

pub fn parse_labels(text: &str) -> Option<BTreeMap<String, String>> {
    if text.is_empty() {
        return Some(BTreeMap::new());
    }
    text.split(';')
        .map(|pair| pair.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

/// File name for the per-trial curve of one assessed configuration.
pub fn capacity_csv_name(name: &str) -> String {
    let slug: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("capacity-{slug}.csv")
}

/// Writes one `capacity-<name>.csv` per configuration (one row per seed of
/// every trial, in trial order) and a combined `capacity.json`. Returns the
/// paths written.
pub fn write_capacity(results: &[NamedCapacity], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for named in results {
        let path = dir.join(capacity_csv_name(&named.name));
        let mut w = csv_writer(&path, &CAPACITY_HEADER)?;
        for trial in &named.result.trials {
            for seed in &trial.seeds {
                w.write_record([
                    trial.devices.to_string(),
                    format_sig(seed.p95_ms),
                    seed.pass.to_string(),
                    seed.seed.to_string(),
                ])
                .map_err(|e| csv_error(&path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let path = dir.join(CAPACITY_SUMMARY_FILE);
    write_json(&path, &results, true)?;
    written.push(path);
    Ok(written)
}

/// One row of a per-seed capacity curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityRow {
    pub devices: u32,
    pub p95_ms: f64,
    pub pass: bool,
    pub seed: u64,
}

pub fn read_capacity_csv(path: &Path) -> Result<Vec<CapacityRow>> {
    csv_records(path, &CAPACITY_HEADER)?
        .iter()
        .map(|rec| {
            Ok(CapacityRow {
                devices: parse_num(path, rec, 0)?,
                p95_ms: parse_num(path, rec, 1)?,
                pass: parse_num(path, rec, 2)?,
                seed: parse_num(path, rec, 3)?,
            })
        })
        .collect()
}

pub fn read_capacity_summary(path: &Path) -> Result<Vec<NamedCapacity>> {
    read_json(path)
}

/// One timed execution of the live demand kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub node: String,
    pub qos: QosClass,
    pub demand_ms: f64,
    pub execution: u32,
    pub iteration: u32,
    pub measured_ms: f64,
    pub warmup: bool,
}

pub fn write_benchmark(rows: &[BenchmarkRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path, &BENCHMARK_HEADER)?;
    for row in rows {
        w.write_record([
            row.node.clone(),
            row.qos.as_str().to_string(),
            format_sig(row.demand_ms),
            row.execution.to_string(),
            row.iteration.to_string(),
            format_sig(row.measured_ms),
            row.warmup.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_benchmark(path: &Path) -> Result<Vec<BenchmarkRow>> {
    csv_records(path, &BENCHMARK_HEADER)?
        .iter()
        .map(|rec| {
            Ok(BenchmarkRow {
                node: field(rec, 0).to_string(),
                qos: parse_num(path, rec, 1)?,
                demand_ms: parse_num(path, rec, 2)?,
                execution: parse_num(path, rec, 3)?,
                iteration: parse_num(path, rec, 4)?,
                measured_ms: parse_num(path, rec, 5)?,
                warmup: parse_num(path, rec, 6)?,
            })
        })
        .collect()
}

/// Statistics of one (node, qos, demand) cell, warm-up rows excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub node: String,
    pub qos: QosClass,
    pub demand_ms: f64,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub sd: f64,
    pub cv: f64,
}

/// Groups measured rows by node, QoS class and demand. Cells are ordered by
/// node name, QoS class and ascending demand.
pub fn summarize_benchmark(rows: &[BenchmarkRow]) -> Result<Vec<BenchmarkCell>> {
    let mut groups: BTreeMap<(&str, QosClass, u64), Vec<f64>> = BTreeMap::new();
    for row in rows {
        if !(row.demand_ms > 0.0) {
            return Err(Error::Domain(format!("benchmark demand must be positive, got {}", row.demand_ms)));
        }
        let values = groups.entry((&row.node, row.qos, row.demand_ms.to_bits())).or_default();
        if !row.warmup {
            values.push(row.measured_ms);
        }
    }
    groups
        .into_iter()
        .map(|((node, qos, demand_bits), values)| {
            let s = summarize_values(&values).map_err(|_| {
                Error::InsufficientData(format!(
                    "no measured rows for node {node}, {qos}, demand {}",
                    f64::from_bits(demand_bits)
                ))
            })?;
            Ok(BenchmarkCell {
                node: node.to_string(),
                qos,
                demand_ms: f64::from_bits(demand_bits),
                mean: s.mean,
                median: s.median,
                p95: s.p95,
                sd: s.sd,
                cv: cv_from_moments(s.mean, s.sd)?,
            })
        })
        .collect()
}

pub fn write_benchmark_summary(cells: &[BenchmarkCell], path: &Path) -> Result<()> {
    let mut w = csv_writer(path, &BENCH_SUMMARY_HEADER)?;
    for c in cells {
        w.write_record([
            c.node.clone(),
            c.qos.as_str().to_string(),
            format_sig(c.demand_ms),
            format_sig(c.mean),
            format_sig(c.median),
            format_sig(c.p95),
            format_sig(c.sd),
            format_sig(c.cv),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Association between node occupancy and execution-time variability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyCorrelation {
    pub cells: usize,
    pub pods_pearson: f64,
    pub pods_spearman: f64,
    pub millicores_pearson: f64,
    pub millicores_spearman: f64,
}

/// Correlates each cell's CV with the pod count and background millicores of
/// its node. Cells on nodes missing from `nodes` are ignored.
pub fn occupancy_correlation(cells: &[BenchmarkCell], nodes: &[NodeSpec]) -> Result<OccupancyCorrelation> {
    let mut pods = Vec::new();
    let mut millicores = Vec::new();
    let mut cvs = Vec::new();
    for cell in cells {
        if let Some(node) = nodes.iter().find(|n| n.name == cell.node) {
            pods.push(f64::from(node.background_pods));
            millicores.push(node.background_millicores);
            cvs.push(cell.cv);
        }
    }
    Ok(OccupancyCorrelation {
        cells: cvs.len(),
        pods_pearson: correlate(&pods, &cvs, CorrelationMethod::Pearson)?,
        pods_spearman: correlate(&pods, &cvs, CorrelationMethod::Spearman)?,
        millicores_pearson: correlate(&millicores, &cvs, CorrelationMethod::Pearson)?,
        millicores_spearman: correlate(&millicores, &cvs, CorrelationMethod::Spearman)?,
    })
}

pub fn write_json_rounded(value: &impl Serialize, path: &Path) -> Result<()> {
    write_json(path, value, true)
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(207.15), "207.15");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(-3.5), "-3.5");
        assert_eq!(format_sig(1234567.0), "1234570");
        assert_eq!(format_sig(0.000123456789), "0.000123457");
        assert_eq!(format_sig(1.5e-7), "1.5e-7");
        assert_eq!(format_sig(2e20), "2e20");
        assert_eq!(format_sig(999999.7), "1000000");
        assert_eq!(format_sig(0.17051), "0.17051");
    }

    #[test]
    fn sig_formatting_reads_back_as_rounded_value() {
        for v in [1.0 / 3.0, 12345.678, 9.87654321e-3, 5.18, 1e17 / 7.0] {
            let back: f64 = format_sig(v).parse().unwrap();
            assert_eq!(back, round_significant(v, SIGNIFICANT_DIGITS));
        }
    }

    #[test]
    fn ms_text_is_exact() {
        assert_eq!(format_ms(0), "0.000");
        assert_eq!(format_ms(1_262_001), "1262.001");
        assert_eq!(parse_ms("1262.001"), Some(1_262_001));
        assert_eq!(parse_ms("5.1"), Some(5_100));
        assert_eq!(parse_ms("7"), Some(7_000));
        assert_eq!(parse_ms("1.0001"), None);
        assert_eq!(parse_ms("-1"), None);
        assert_eq!(parse_ms(""), None);
        for us in [0, 1, 999, 1000, 123_456_789_012] {
            assert_eq!(parse_ms(&format_ms(us)), Some(us));
        }
    }

    #[test]
    fn labels_round_trip() {
        let labels: BTreeMap<String, String> =
            [("node".to_string(), "worker-1".to_string()), ("stage".into(), "device-comm".into())].into();
        let text = format_labels(&labels);
        assert_eq!(text, "node=worker-1;stage=device-comm");
        assert_eq!(parse_labels(&text), Some(labels));
        assert_eq!(parse_labels(""), Some(BTreeMap::new()));
        assert_eq!(parse_labels("broken"), None);
    }

    #[test]
    fn json_floats_rounded_recursively() {
        let mut v = serde_json::json!({"a": 1.0 / 3.0, "b": [2.0f64.sqrt(), 7], "c": {"d": 1234567.89}});
        round_json_floats(&mut v);
        assert_eq!(v.to_string(), r#"{"a":0.333333,"b":[1.41421,7],"c":{"d":1234570.0}}"#);
    }

    #[test]
    fn warmup_rows_excluded_from_cells() {
        let row = |iteration, measured_ms, warmup| BenchmarkRow {
            node: "n1".into(),
            qos: QosClass::BestEffort,
            demand_ms: 50.0,
            execution: 1,
            iteration,
            measured_ms,
            warmup,
        };
        let rows = vec![row(1, 500.0, true), row(2, 40.0, false), row(3, 60.0, false)];
        let cells = summarize_benchmark(&rows).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].mean, 50.0);
        assert!((cells[0].cv - 200f64.sqrt() / 50.0).abs() < 1e-12);
        assert!(summarize_benchmark(&[row(1, 1.0, true)]).is_err());
    }
}
