//! Descriptive statistics shared by benchmarks, simulations and SLO checks.
//!
//! Percentiles everywhere use linear interpolation between closest ranks
//! (Hyndman-Fan type 7).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Type-7 percentile, `p` in [0, 100]. Sorts `values` in place.
pub fn percentile(values: &mut [f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("percentile of an empty sample".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Domain(format!("percentile {p} outside [0, 100]")));
    }
    values.sort_by(f64::total_cmp);
    Ok(percentile_sorted(values, p))
}

/// Type-7 percentile of an already sorted, non-empty slice.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median of a non-empty slice (sorts in place). NaN for empty input.
pub fn median(values: &mut [f64]) -> f64 {
    percentile(values, 50.0).unwrap_or(f64::NAN)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation (n - 1 denominator); zero for a single value.
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Rounds to `digits` significant decimal digits, the precision used by
/// every exported statistic. Round-trips exactly through its own text form.
pub fn round_significant(value: f64, digits: usize) -> f64 {
    if !value.is_finite() || value == 0.0 || digits == 0 {
        return value;
    }
    format!("{:.*e}", digits - 1, value).parse().unwrap_or(value)
}

/// Measurements sharing one label set. Warm-up observations are kept for
/// export but never enter a statistic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub labels: BTreeMap<String, String>,
    pub values: Vec<f64>,
    pub warmup: Vec<bool>,
}

impl SampleSet {
    pub fn new(labels: &[(&str, &str)]) -> Self {
        Self {
            labels: labels.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            ..Self::default()
        }
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let warmup = vec![false; values.len()];
        Self {
            labels: BTreeMap::new(),
            values,
            warmup,
        }
    }

    pub fn push(&mut self, value: f64, warmup: bool) {
        self.values.push(value);
        self.warmup.push(warmup);
    }

    pub fn measured(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.warmup)
            .filter(|(_, w)| !**w)
            .map(|(v, _)| *v)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub sd: f64,
}

pub fn summarize(set: &SampleSet) -> Result<Summary> {
    summarize_values(&set.measured())
}

pub fn summarize_values(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::InsufficientData("cannot summarize an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        n: sorted.len(),
        mean: mean(&sorted).unwrap(),
        median: percentile_sorted(&sorted, 50.0),
        p95: percentile_sorted(&sorted, 95.0),
        sd: sample_sd(&sorted).unwrap(),
    })
}

/// Sample standard deviation over the mean.
pub fn coefficient_of_variation(set: &SampleSet) -> Result<f64> {
    let values = set.measured();
    if values.len() < 2 {
        return Err(Error::InsufficientData("CV needs at least two values".into()));
    }
    cv_from_moments(mean(&values).unwrap(), sample_sd(&values).unwrap())
}

pub fn cv_from_moments(mean: f64, sd: f64) -> Result<f64> {
    if mean == 0.0 {
        return Err(Error::Domain("coefficient of variation undefined for zero mean".into()));
    }
    Ok(sd / mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

pub fn correlate(x: &[f64], y: &[f64], method: CorrelationMethod) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData("correlation needs at least three pairs".into()));
    }
    match method {
        CorrelationMethod::Pearson => pearson(x, y),
        CorrelationMethod::Spearman => pearson(&fractional_ranks(x), &fractional_ranks(y)),
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let mx = mean(x).unwrap();
    let my = mean(y).unwrap();
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain("correlation undefined for zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}
