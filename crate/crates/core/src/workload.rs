//! Open workload of periodically sending devices.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PayloadSpec {
    Fixed { bytes: u64 },
    Uniform { min: u64, max: u64 },
}

impl PayloadSpec {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            PayloadSpec::Fixed { bytes } => bytes,
            PayloadSpec::Uniform { min, max } => rng.random_range(min..=max),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PayloadSpec::Fixed { bytes } => bytes as f64,
            PayloadSpec::Uniform { min, max } => (min + max) as f64 / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProfile {
    pub devices: u32,
    pub ramp_up_s: f64,
    #[serde(default = "default_send_period")]
    pub send_period_s: f64,
    pub payload: PayloadSpec,
    /// Each send is shifted by a uniform draw from [-jitter_s, +jitter_s].
    #[serde(default)]
    pub jitter_s: f64,
    pub duration_s: f64,
}

fn default_send_period() -> f64 {
    60.0
}

impl LoadProfile {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.ramp_up_s >= 0.0) {
            problems.push(format!("ramp_up_s must be >= 0, got {}", self.ramp_up_s));
        }
        if !(self.send_period_s > 0.0) {
            problems.push(format!("send_period_s must be > 0, got {}", self.send_period_s));
        }
        if !(self.jitter_s >= 0.0) || self.jitter_s * 2.0 >= self.send_period_s {
            problems.push(format!(
                "jitter_s must lie in [0, send_period_s / 2), got {}",
                self.jitter_s
            ));
        }
        if !(self.duration_s >= 0.0) {
            problems.push(format!("duration_s must be >= 0, got {}", self.duration_s));
        }
        if let PayloadSpec::Uniform { min, max } = self.payload {
            if min > max {
                problems.push(format!("payload range [{min}, {max}] is empty"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Long-run send rate in messages per second once all devices are up.
    pub fn steady_rate(&self) -> f64 {
        f64::from(self.devices) / self.send_period_s
    }

    pub fn with_devices(mut self, devices: u32) -> Self {
        self.devices = devices;
        self
    }
}

/// Named profiles for the two usage scenarios: a few test vehicles sending
/// many signals often, and a large fleet sending a few signals rarely.
pub fn profile_presets() -> Vec<(&'static str, LoadProfile)> {
    vec![
        (
            "homologation",
            LoadProfile {
                devices: 20,
                ramp_up_s: 0.0,
                send_period_s: 5.0,
                payload: PayloadSpec::Fixed { bytes: 256 * 1024 },
                jitter_s: 0.0,
                duration_s: 300.0,
            },
        ),
        (
            "fleet",
            LoadProfile {
                devices: 2000,
                ramp_up_s: 60.0,
                send_period_s: 60.0,
                payload: PayloadSpec::Uniform { min: 512, max: 4096 },
                jitter_s: 1.0,
                duration_s: 300.0,
            },
        ),
    ]
}

pub fn preset(name: &str) -> Option<LoadProfile> {
    profile_presets()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, p)| p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub device: u32,
    pub time: SimTime,
    pub payload_bytes: u64,
}

/// Time-ordered sends of all devices, produced lazily. Ties are ordered by
/// device id.
pub struct ArrivalStream<R> {
    profile: LoadProfile,
    rng: R,
    starts: Vec<f64>,
    next_index: Vec<u64>,
    heap: BinaryHeap<Reverse<(SimTime, u32)>>,
    duration_us: SimTime,
}

fn to_us(seconds: f64) -> SimTime {
    (seconds * 1e6).round().max(0.0) as SimTime
}

impl<R: Rng> ArrivalStream<R> {
    fn new(profile: LoadProfile, mut rng: R) -> Self {
        let starts: Vec<f64> = (0..profile.devices)
            .map(|_| {
                if profile.ramp_up_s > 0.0 {
                    rng.random_range(0.0..=profile.ramp_up_s)
                } else {
                    0.0
                }
            })
            .collect();
        let mut stream = Self {
            duration_us: to_us(profile.duration_s),
            next_index: vec![0; starts.len()],
            heap: BinaryHeap::with_capacity(starts.len()),
            starts,
            profile,
            rng,
        };
        for device in 0..stream.starts.len() as u32 {
            stream.schedule_next(device);
        }
        stream
    }

    fn schedule_next(&mut self, device: u32) {
        let d = device as usize;
        let k = self.next_index[d];
        self.next_index[d] += 1;
        let nominal = self.starts[d] + k as f64 * self.profile.send_period_s;
        let jitter = if self.profile.jitter_s > 0.0 {
            self.rng.random_range(-self.profile.jitter_s..=self.profile.jitter_s)
        } else {
            0.0
        };
        let t = to_us((nominal + jitter).max(0.0));
        if t <= self.duration_us {
            self.heap.push(Reverse((t, device)));
        }
    }
}

impl<R: Rng> Iterator for ArrivalStream<R> {
    type Item = Arrival;

    fn next(&mut self) -> Option<Arrival> {
        let Reverse((time, device)) = self.heap.pop()?;
        let payload_bytes = self.profile.payload.draw(&mut self.rng);
        self.schedule_next(device);
        Some(Arrival {
            device,
            time,
            payload_bytes,
        })
    }
}

/// Sends of every device: start offsets uniform over the ramp-up window,
/// then one send per period until the profile's duration.
pub fn generate_arrivals<R: Rng>(profile: &LoadProfile, rng: R) -> ArrivalStream<R> {
    ArrivalStream::new(profile.clone(), rng)
}

pub fn write_arrivals_csv(path: &Path, arrivals: impl IntoIterator<Item = Arrival>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let write = || -> std::io::Result<()> {
        writeln!(w, "device_id,t_ms,payload_bytes")?;
        for a in arrivals {
            writeln!(w, "{},{}.{:03},{}", a.device, a.time / 1000, a.time % 1000, a.payload_bytes)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}
