//! Stochastic execution-time model for generated CPU demand.
//!
//! A request for `nominal` ms of CPU takes `nominal * slowdown`, where the
//! slowdown is a two-piece log-normal with its first quartile pinned at 1:
//!
//! ```text
//! slowdown(z) = clamp(exp(s * (z - z25)), min, max),  z ~ N(0, 1)
//! s = sigma_up                 for z >= z25
//! s = sigma_up * lower_ratio   for z <  z25
//! ```
//!
//! Three quarters of the mass is a right-skewed slowdown, one quarter a
//! bounded speed-up. The clamp keeps the deviation band finite. `sigma_up`
//! is chosen so that the distribution's coefficient of variation equals the
//! CV predicted from node occupancy.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::QosClass;

/// Standard normal quantile at 0.25.
pub const Z_Q1: f64 = -0.674_489_750_196_081_7;

const QUADRATURE_POINTS: usize = 4096;
const CURVE_STEP: f64 = 0.005;
const CURVE_MAX_SIGMA: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowdownShape {
    /// Lower-piece log-scale relative to the upper piece.
    pub lower_ratio: f64,
    pub min_slowdown: f64,
    pub max_slowdown: f64,
}

impl SlowdownShape {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower_ratio >= 0.0) {
            return Err(Error::Domain(format!("lower_ratio must be >= 0, got {}", self.lower_ratio)));
        }
        if !(self.min_slowdown > 0.0 && self.min_slowdown <= 1.0 && self.max_slowdown >= 1.0) {
            return Err(Error::Domain(format!(
                "slowdown bounds must satisfy 0 < min <= 1 <= max, got [{}, {}]",
                self.min_slowdown, self.max_slowdown
            )));
        }
        Ok(())
    }

    pub fn slowdown(&self, sigma_up: f64, z: f64) -> f64 {
        let scale = if z >= Z_Q1 { sigma_up } else { sigma_up * self.lower_ratio };
        (scale * (z - Z_Q1)).exp().clamp(self.min_slowdown, self.max_slowdown)
    }

    /// Mean and (population) standard deviation of the slowdown.
    pub fn moments(&self, sigma_up: f64) -> (f64, f64) {
        let grid = normal_grid();
        let (mut s1, mut s2) = (0.0, 0.0);
        for &z in grid {
            let v = self.slowdown(sigma_up, z);
            s1 += v;
            s2 += v * v;
        }
        let n = grid.len() as f64;
        let mean = s1 / n;
        (mean, (s2 / n - mean * mean).max(0.0).sqrt())
    }

    pub fn cv(&self, sigma_up: f64) -> f64 {
        let (m, sd) = self.moments(sigma_up);
        sd / m
    }

    /// Finds the shape and `sigma_up` whose slowdown has the given mean
    /// (relative to nominal) and coefficient of variation.
    pub fn moment_matched(mean_ratio: f64, cv: f64, min_slowdown: f64, max_slowdown: f64) -> Result<(Self, f64)> {
        if !(mean_ratio > 0.0 && cv > 0.0) {
            return Err(Error::Domain("moment matching needs positive mean and CV".into()));
        }
        let shape_for = |ratio: f64| SlowdownShape {
            lower_ratio: ratio,
            min_slowdown,
            max_slowdown,
        };
        // at fixed CV, more lower spread means a smaller upper sigma and a lower mean
        let mean_at = |ratio: f64| -> Option<(f64, f64)> {
            let shape = shape_for(ratio);
            let sigma = bisect(0.0, CURVE_MAX_SIGMA, |s| shape.cv(s) - cv)?;
            Some((shape.moments(sigma).0, sigma))
        };
        // without enough lower spread the clamp caps the reachable CV
        let mut lo = 0.0;
        while mean_at(lo).is_none() {
            lo += 0.25;
            if lo > 20.0 {
                return Err(unreachable_cv(cv));
            }
        }
        let mut hi = 20.0;
        let (m_lo, _) = mean_at(lo).ok_or_else(|| unreachable_cv(cv))?;
        if m_lo < mean_ratio {
            return Err(Error::Domain(format!(
                "mean ratio {mean_ratio} exceeds what CV {cv} allows ({m_lo:.4})"
            )));
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            match mean_at(mid) {
                Some((m, _)) if m > mean_ratio => lo = mid,
                _ => hi = mid,
            }
        }
        let ratio = 0.5 * (lo + hi);
        let (_, sigma) = mean_at(ratio).ok_or_else(|| unreachable_cv(cv))?;
        Ok((shape_for(ratio), sigma))
    }
}

fn unreachable_cv(cv: f64) -> Error {
    Error::Domain(format!("CV {cv} is not reachable inside the slowdown bounds"))
}

/// Root of an increasing function on [lo, hi], if it changes sign.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return None;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Standard normal quantiles at the midpoints of an equal-probability grid.
fn normal_grid() -> &'static [f64] {
    static GRID: OnceLock<Vec<f64>> = OnceLock::new();
    GRID.get_or_init(|| {
        let normal = Normal::standard();
        (0..QUADRATURE_POINTS)
            .map(|k| normal.inverse_cdf((k as f64 + 0.5) / QUADRATURE_POINTS as f64))
            .collect()
    })
}

/// Monotone table of (sigma_up, cv) used to invert the CV.
#[derive(Debug)]
struct CvCurve {
    shape: SlowdownShape,
    points: Vec<(f64, f64)>,
}

impl CvCurve {
    fn build(shape: SlowdownShape) -> Self {
        let mut points = vec![(0.0, 0.0)];
        let steps = (CURVE_MAX_SIGMA / CURVE_STEP) as usize;
        for k in 1..=steps {
            let sigma = k as f64 * CURVE_STEP;
            let cv = shape.cv(sigma);
            if cv <= points.last().unwrap().1 {
                break;
            }
            points.push((sigma, cv));
        }
        Self { shape, points }
    }

    fn sigma_for(&self, cv: f64) -> f64 {
        if cv <= 0.0 {
            return 0.0;
        }
        let last = *self.points.last().unwrap();
        if cv >= last.1 {
            return last.0;
        }
        let idx = self.points.partition_point(|p| p.1 < cv);
        let (s0, c0) = self.points[idx - 1];
        let (s1, c1) = self.points[idx];
        s0 + (s1 - s0) * (cv - c0) / (c1 - c0)
    }
}

/// Maps node occupancy and QoS class to a slowdown distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariabilityModel {
    pub cv_intercept: f64,
    pub cv_slope_per_pod: f64,
    /// Multiplicative CV factor per QoS class; missing classes use 1.
    #[serde(default)]
    pub qos_adjustment: BTreeMap<QosClass, f64>,
    pub shape: SlowdownShape,
    #[serde(skip)]
    curve: OnceLock<Arc<CvCurve>>,
}

impl PartialEq for VariabilityModel {
    fn eq(&self, other: &Self) -> bool {
        self.cv_intercept == other.cv_intercept
            && self.cv_slope_per_pod == other.cv_slope_per_pod
            && self.qos_adjustment == other.qos_adjustment
            && self.shape == other.shape
    }
}

pub const PAPER_BWCLOUD: &str = "paper-bwcloud";
pub const DETERMINISTIC: &str = "deterministic";

/// Moment-matched to the demand-50 best-effort cell of the published
/// benchmark (mean 52.58131 ms, SD 8.965577 ms), with speed-ups and
/// slowdowns bounded to 0.6x and 1.5x.
pub const PAPER_BWCLOUD_SHAPE: SlowdownShape = SlowdownShape {
    lower_ratio: 3.841_35,
    min_slowdown: 0.6,
    max_slowdown: 1.5,
};

/// CV of the demand-50 best-effort cell.
pub const PAPER_BWCLOUD_CV: f64 = 8.965_577 / 52.581_31;
/// Occupancy of the node hosting the application pods.
pub const PAPER_BWCLOUD_REFERENCE_PODS: u32 = 11;
pub const PAPER_BWCLOUD_SLOPE: f64 = 0.01;

impl VariabilityModel {
    pub fn new(cv_intercept: f64, cv_slope_per_pod: f64, shape: SlowdownShape) -> Self {
        Self {
            cv_intercept,
            cv_slope_per_pod,
            qos_adjustment: BTreeMap::new(),
            shape,
            curve: OnceLock::new(),
        }
    }

    /// No variability at all: actual time always equals nominal time.
    pub fn deterministic() -> Self {
        Self::new(0.0, 0.0, PAPER_BWCLOUD_SHAPE)
    }

    /// Cloud profile: CV grows by 0.01 per co-located pod and equals the
    /// published demand-50 CV on an 11-pod node.
    pub fn paper_bwcloud() -> Self {
        let intercept = PAPER_BWCLOUD_CV - PAPER_BWCLOUD_SLOPE * f64::from(PAPER_BWCLOUD_REFERENCE_PODS);
        Self::new(intercept, PAPER_BWCLOUD_SLOPE, PAPER_BWCLOUD_SHAPE)
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            PAPER_BWCLOUD => Some(Self::paper_bwcloud()),
            DETERMINISTIC => Some(Self::deterministic()),
            _ => None,
        }
    }

    pub fn profile_names() -> &'static [&'static str] {
        &[PAPER_BWCLOUD, DETERMINISTIC]
    }

    pub fn with_qos_adjustment(mut self, qos: QosClass, factor: f64) -> Self {
        self.qos_adjustment.insert(qos, factor);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if !self.cv_intercept.is_finite() || !self.cv_slope_per_pod.is_finite() {
            return Err(Error::Domain("CV coefficients must be finite".into()));
        }
        if let Some((q, f)) = self.qos_adjustment.iter().find(|(_, f)| !(**f >= 0.0)) {
            return Err(Error::Domain(format!("QoS adjustment for {q} must be >= 0, got {f}")));
        }
        Ok(())
    }

    pub fn cv_for(&self, pods_on_node: u32, qos: QosClass) -> f64 {
        let base = (self.cv_intercept + self.cv_slope_per_pod * f64::from(pods_on_node)).max(0.0);
        base * self.qos_adjustment.get(&qos).copied().unwrap_or(1.0)
    }

    /// Upper log-scale that realises `cv`; saturates at the largest CV the
    /// clamped shape can reach.
    pub fn sigma_for_cv(&self, cv: f64) -> f64 {
        let curve = self.curve.get_or_init(|| Arc::new(CvCurve::build(self.shape)));
        if curve.shape == self.shape {
            curve.sigma_for(cv)
        } else {
            CvCurve::build(self.shape).sigma_for(cv)
        }
    }

    pub fn sample_slowdown<R: Rng + ?Sized>(&self, cv: f64, rng: &mut R) -> f64 {
        if cv <= 0.0 {
            return 1.0;
        }
        let sigma = self.sigma_for_cv(cv);
        let z: f64 = rng.sample(StandardNormal);
        self.shape.slowdown(sigma, z)
    }
}

/// Actual execution time of a `nominal_ms` demand on a node with
/// `pods_on_node` pods.
pub fn sample_actual_ms<R: Rng + ?Sized>(
    nominal_ms: f64,
    pods_on_node: u32,
    qos: QosClass,
    model: &VariabilityModel,
    rng: &mut R,
) -> f64 {
    let cv = model.cv_for(pods_on_node, qos);
    nominal_ms * model.sample_slowdown(cv, rng)
}

/// Least-squares line through (occupancy, cv) points. The shape is taken
/// from the cloud profile.
pub fn fit_variability(samples: &[(f64, f64)]) -> Result<VariabilityModel> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least two (occupancy, cv) points, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitDegenerate);
    }
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(VariabilityModel::new(my - slope * mx, slope, PAPER_BWCLOUD_SHAPE))
}
