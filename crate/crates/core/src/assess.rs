//! SLO checks and capacity search over the number of devices.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::sim::{self, MeasurementSpan};
use crate::stats::{median, percentile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SloSpec {
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    #[serde(default = "default_threshold")]
    pub threshold_ms: f64,
    #[serde(default)]
    pub span: MeasurementSpan,
}

fn default_percentile() -> f64 {
    95.0
}
fn default_threshold() -> f64 {
    1000.0
}

impl Default for SloSpec {
    fn default() -> Self {
        Self {
            percentile: default_percentile(),
            threshold_ms: default_threshold(),
            span: MeasurementSpan::Ingress,
        }
    }
}

impl SloSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(Error::Domain(format!("percentile must lie in (0, 100), got {}", self.percentile)));
        }
        if !(self.threshold_ms > 0.0) {
            return Err(Error::Domain(format!("threshold_ms must be > 0, got {}", self.threshold_ms)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SloVerdict {
    pub pass: bool,
    /// The sample percentile the threshold was compared against.
    pub achieved_ms: f64,
}

/// Passes when the configured percentile is at most the threshold.
pub fn meets_slo(samples: &[f64], slo: &SloSpec) -> Result<SloVerdict> {
    let mut values = samples.to_vec();
    let achieved_ms = percentile(&mut values, slo.percentile)?;
    Ok(SloVerdict {
        pass: achieved_ms <= slo.threshold_ms,
        achieved_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub p95_ms: f64,
    pub pass: bool,
}

/// Verdict for one device count. With several seeds the verdict is taken
/// on the median of the per-seed percentiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub devices: u32,
    pub p95_ms: f64,
    pub pass: bool,
    pub seeds: Vec<SeedOutcome>,
}

impl Trial {
    pub fn from_seeds(devices: u32, seeds: Vec<SeedOutcome>, slo: &SloSpec) -> Result<Self> {
        let mut values: Vec<f64> = seeds.iter().map(|s| s.p95_ms).collect();
        if values.is_empty() {
            return Err(Error::InsufficientData(format!("no seed results at {devices} devices")));
        }
        let p95_ms = median(&mut values);
        Ok(Self {
            devices,
            p95_ms,
            pass: p95_ms <= slo.threshold_ms,
            seeds,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundsHit {
    /// The lowest device count already failed; the capacity is below `lo`.
    pub lo_fail: bool,
    /// The highest device count still passed; the capacity is at least `hi`.
    pub hi_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub max_devices: u32,
    pub lo: u32,
    pub hi: u32,
    pub step: u32,
    pub trials: Vec<Trial>,
    pub bounds_hit: BoundsHit,
}

/// Binary search over the grid `lo, lo + step, ...` up to the largest grid
/// point not above `hi`, assuming trials pass up to some count and fail
/// beyond. Returns the largest passing grid point.
pub fn find_capacity<F>(lo: u32, hi: u32, step: u32, mut runner: F) -> Result<CapacityResult>
where
    F: FnMut(u32) -> Result<Trial>,
{
    if step == 0 {
        return Err(Error::Domain("step must be >= 1".into()));
    }
    if lo >= hi {
        return Err(Error::Domain(format!("lo ({lo}) must be below hi ({hi})")));
    }
    let top = (hi - lo) / step;
    let grid = |k: u32| lo + k * step;
    let mut result = CapacityResult {
        max_devices: lo,
        lo,
        hi,
        step,
        trials: Vec::new(),
        bounds_hit: BoundsHit::default(),
    };
    let mut probe = |k: u32, result: &mut CapacityResult| -> Result<bool> {
        let devices = grid(k);
        match runner(devices) {
            Ok(trial) => {
                let pass = trial.pass;
                result.trials.push(trial);
                Ok(pass)
            }
            Err(e) => Err(Error::Trial {
                devices,
                message: e.to_string(),
                partial: Box::new(result.clone()),
            }),
        }
    };

    if !probe(0, &mut result)? {
        result.bounds_hit.lo_fail = true;
        return Ok(result);
    }
    if top == 0 {
        result.bounds_hit.hi_pass = true;
        return Ok(result);
    }
    if probe(top, &mut result)? {
        result.bounds_hit.hi_pass = true;
        result.max_devices = grid(top);
        return Ok(result);
    }
    let (mut pass_k, mut fail_k) = (0, top);
    while fail_k - pass_k > 1 {
        let mid = pass_k + (fail_k - pass_k) / 2;
        if probe(mid, &mut result)? {
            pass_k = mid;
        } else {
            fail_k = mid;
        }
    }
    result.max_devices = grid(pass_k);
    Ok(result)
}

/// Seeds used for the replicated trials of `config`.
pub fn trial_seeds(config: &ScenarioConfig) -> Vec<u64> {
    (0..u64::from(config.assessment.seeds)).map(|i| config.seed.wrapping_add(i)).collect()
}

/// Runs the scenario at `devices` once per seed, at most `jobs` runs at a
/// time, and judges the median percentile against the SLO.
pub fn simulate_trial(config: &ScenarioConfig, devices: u32, seeds: &[u64], jobs: usize) -> Result<Trial> {
    let base = config.with_devices(devices)?;
    let warmup_end = (base.horizon_s * base.assessment.warmup_fraction * 1e6).round() as u64;
    let one = |seed: u64| -> Result<SeedOutcome> {
        let mut c = base.clone();
        c.seed = seed;
        let report = sim::run(&c)?;
        let samples = report.slo_samples_ms(warmup_end);
        if samples.is_empty() {
            return Ok(SeedOutcome { seed, p95_ms: 0.0, pass: true });
        }
        let verdict = meets_slo(&samples, &c.slo)?;
        Ok(SeedOutcome {
            seed,
            p95_ms: verdict.achieved_ms,
            pass: verdict.pass,
        })
    };
    let jobs = jobs.max(1);
    let mut outcomes = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(jobs) {
        if chunk.len() == 1 {
            outcomes.push(one(chunk[0])?);
            continue;
        }
        let results: Vec<Result<SeedOutcome>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || one(seed))).collect();
            handles.into_iter().map(|h| h.join().expect("trial thread panicked")).collect()
        });
        for r in results {
            outcomes.push(r?);
        }
    }
    Trial::from_seeds(devices, outcomes, &base.slo)
}

/// Capacity of `config` using its own assessment settings.
pub fn assess(config: &ScenarioConfig, jobs: usize) -> Result<CapacityResult> {
    let seeds = trial_seeds(config);
    let a = &config.assessment;
    find_capacity(a.lo, a.hi, a.step, |devices| simulate_trial(config, devices, &seeds, jobs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCapacity {
    pub name: String,
    pub slo: SloSpec,
    pub result: CapacityResult,
}

/// Capacity of each named configuration, in order, for side-by-side plots.
pub fn assess_configurations(configs: &[(&str, &ScenarioConfig)], jobs: usize) -> Result<Vec<NamedCapacity>> {
    configs
        .iter()
        .map(|(name, config)| {
            Ok(NamedCapacity {
                name: name.to_string(),
                slo: config.slo,
                result: assess(config, jobs)?,
            })
        })
        .collect()
}
