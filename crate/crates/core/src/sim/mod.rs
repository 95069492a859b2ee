//! Discrete-event simulation of the three-stage pipeline on a cluster.

mod engine;
mod events;
mod node;

use serde::{Deserialize, Serialize};

use crate::autoscale::ScalingEvent;
use crate::error::{Error, Result};
use crate::model::{us_to_ms, Message, MetricSample, SimTime, Stage};

pub use engine::{run, run_detailed};
pub use events::EventQueue;
pub use node::{step_period, BusyPod, Completion, PeriodOutcome};

/// Which part of the pipeline a response time covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementSpan {
    /// Creation to completion of the device-facing stage.
    #[default]
    Ingress,
    /// Creation to completion of the last stage.
    EndToEnd,
}

impl MeasurementSpan {
    pub fn final_stage(self) -> Stage {
        match self {
            MeasurementSpan::Ingress => Stage::DeviceComm,
            MeasurementSpan::EndToEnd => Stage::DataProcessing,
        }
    }
}

impl std::str::FromStr for MeasurementSpan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ingress" => Ok(MeasurementSpan::Ingress),
            "end-to-end" | "end_to_end" => Ok(MeasurementSpan::EndToEnd),
            other => Err(Error::Domain(format!("unknown span `{other}`"))),
        }
    }
}

/// Response time of `msg` over `span` in milliseconds.
pub fn measure_response_time(msg: &Message, span: MeasurementSpan) -> Result<f64> {
    let end = msg.completed(span.final_stage()).ok_or(Error::NotReady(msg.id))?;
    Ok(us_to_ms(end - msg.created_at))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSample {
    pub msg_id: u64,
    pub created: SimTime,
    pub completed: SimTime,
}

impl ResponseSample {
    pub fn response_ms(&self) -> f64 {
        us_to_ms(self.completed - self.created)
    }
}

/// A message that did not complete the measured span before the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unfinished {
    pub msg_id: u64,
    pub created: SimTime,
    pub dropped: bool,
}

/// Message counts relative to the measured span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounts {
    pub generated: u64,
    pub completed: u64,
    pub in_flight: u64,
    pub dropped: u64,
    /// Messages that finished every stage.
    pub pipeline_completed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub span: MeasurementSpan,
    pub horizon: SimTime,
    /// Completed spans, in completion order.
    pub responses: Vec<ResponseSample>,
    pub unfinished: Vec<Unfinished>,
    pub scaling_events: Vec<ScalingEvent>,
    pub metrics: Vec<MetricSample>,
    pub counts: RunCounts,
}

impl RunReport {
    pub fn response_times_ms(&self) -> Vec<f64> {
        self.responses.iter().map(ResponseSample::response_ms).collect()
    }

    /// Samples for SLO evaluation: messages created at or after `warmup_end`.
    /// Messages still open at the horizon count with their age at the
    /// horizon, a lower bound on their eventual response time.
    pub fn slo_samples_ms(&self, warmup_end: SimTime) -> Vec<f64> {
        let done = self
            .responses
            .iter()
            .filter(|r| r.created >= warmup_end)
            .map(ResponseSample::response_ms);
        let open = self
            .unfinished
            .iter()
            .filter(|u| u.created >= warmup_end)
            .map(|u| us_to_ms(self.horizon - u.created));
        done.chain(open).collect()
    }

    pub fn metric_series<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a MetricSample> + 'a {
        self.metrics.iter().filter(move |m| m.name == name)
    }
}

pub const METRIC_NODE_MILLICORES: &str = "node_cpu_millicores";
pub const METRIC_QUEUE_DEPTH: &str = "queue_depth";
pub const METRIC_REPLICAS: &str = "replicas";
