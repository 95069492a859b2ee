//! Shared vocabulary: resources, QoS classes, pods, nodes, pipeline
//! messages and metric samples.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default CFS scheduling period in microseconds (100 ms).
pub const DEFAULT_PERIOD_US: u64 = 100_000;

/// Kernel minimum for `cpu.shares`.
pub const MIN_SHARES: u64 = 2;

/// Simulation time in microseconds since the start of a run.
pub type SimTime = u64;

pub fn us_to_ms(us: SimTime) -> f64 {
    us as f64 / 1000.0
}

pub fn ms_to_us(ms: f64) -> SimTime {
    (ms * 1000.0).round().max(0.0) as SimTime
}

/// CPU quantity in thousandths of one vCPU.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Millicores(pub u32);

impl Millicores {
    pub const ZERO: Millicores = Millicores(0);

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn is_whole_vcpus(self) -> bool {
        self.0 > 0 && self.0.is_multiple_of(1000)
    }
}

impl fmt::Display for Millicores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}m", self.0)
    }
}

/// Requests and limits of a pod. A zero `cpu_request` means no CPU request.
/// Memory fields only take part in QoS classification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSpec {
    #[serde(default)]
    pub cpu_request: Millicores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_limit: Option<Millicores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem_request: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem_limit: Option<u64>,
}

impl ResourceSpec {
    pub fn best_effort() -> Self {
        Self::default()
    }

    pub fn burstable(cpu_request: u32) -> Self {
        Self {
            cpu_request: Millicores(cpu_request),
            ..Self::default()
        }
    }

    pub fn guaranteed(cpu: u32, mem: u64) -> Self {
        Self {
            cpu_request: Millicores(cpu),
            cpu_limit: Some(Millicores(cpu)),
            mem_request: Some(mem),
            mem_limit: Some(mem),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(limit) = self.cpu_limit {
            if limit < self.cpu_request {
                return Err(Error::Domain(format!(
                    "cpu_limit {limit} is below cpu_request {}",
                    self.cpu_request
                )));
            }
        }
        if let (Some(req), Some(limit)) = (self.mem_request, self.mem_limit) {
            if limit < req {
                return Err(Error::Domain(format!(
                    "mem_limit {limit} is below mem_request {req}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QosClass {
    Guaranteed,
    Burstable,
    BestEffort,
}

impl QosClass {
    pub const ALL: [QosClass; 3] = [QosClass::Guaranteed, QosClass::Burstable, QosClass::BestEffort];

    pub fn as_str(self) -> &'static str {
        match self {
            QosClass::Guaranteed => "guaranteed",
            QosClass::Burstable => "burstable",
            QosClass::BestEffort => "best-effort",
        }
    }
}

impl fmt::Display for QosClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for QosClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "guaranteed" => Ok(QosClass::Guaranteed),
            "burstable" => Ok(QosClass::Burstable),
            "best-effort" | "besteffort" => Ok(QosClass::BestEffort),
            other => Err(Error::Domain(format!("unknown QoS class `{other}`"))),
        }
    }
}

/// Kubernetes QoS classification.
///
/// Guaranteed needs CPU and memory limits that both equal their (present)
/// requests. A spec with no request and no limit at all is best-effort.
/// Anything else is burstable.
pub fn qos_class_of(resources: &ResourceSpec) -> QosClass {
    let has_cpu_request = resources.cpu_request.0 > 0;
    let cpu_matches = has_cpu_request && resources.cpu_limit == Some(resources.cpu_request);
    let mem_matches = resources.mem_request.is_some() && resources.mem_limit == resources.mem_request;
    if cpu_matches && mem_matches {
        return QosClass::Guaranteed;
    }
    let anything_set = has_cpu_request
        || resources.cpu_limit.is_some()
        || resources.mem_request.is_some()
        || resources.mem_limit.is_some();
    if anything_set {
        QosClass::Burstable
    } else {
        QosClass::BestEffort
    }
}

/// Fraction of a node's CPU capacity that `mc` millicores represent,
/// clamped at 1.
pub fn millicores_to_fraction(mc: f64, vcpus: u32) -> Result<f64> {
    if vcpus == 0 {
        return Err(Error::Domain("node must have at least one vCPU".into()));
    }
    if !(mc >= 0.0) {
        return Err(Error::Domain(format!("millicores must be non-negative, got {mc}")));
    }
    Ok((mc / (f64::from(vcpus) * 1000.0)).min(1.0))
}

/// cgroup weight for a CPU request, `round(mc * 1024 / 1000)` floored at 2.
pub fn shares_from_request(cpu_request: Millicores) -> u64 {
    let scaled = (u64::from(cpu_request.0) * 1024 + 500) / 1000;
    scaled.max(MIN_SHARES)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodSpec {
    pub id: String,
    pub deployment: String,
    pub resources: ResourceSpec,
    /// Whether the static CPU-manager policy may pin this pod to whole CPUs.
    #[serde(default)]
    pub dedicated_cpu_eligible: bool,
}

impl PodSpec {
    pub fn new(id: impl Into<String>, deployment: impl Into<String>, resources: ResourceSpec) -> Self {
        Self {
            id: id.into(),
            deployment: deployment.into(),
            resources,
            dedicated_cpu_eligible: false,
        }
    }

    pub fn qos(&self) -> QosClass {
        qos_class_of(&self.resources)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    #[default]
    App,
    Broker,
    Db,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub vcpus: u32,
    /// Baseline noise load from platform pods, in millicores.
    #[serde(default)]
    pub background_millicores: f64,
    /// Number of non-application pods already running on the node.
    #[serde(default)]
    pub background_pods: u32,
    #[serde(default)]
    pub role: NodeRole,
}

impl NodeSpec {
    pub fn new(name: impl Into<String>, vcpus: u32) -> Self {
        Self {
            name: name.into(),
            vcpus,
            background_millicores: 0.0,
            background_pods: 0,
            role: NodeRole::App,
        }
    }

    pub fn allocatable(&self) -> Millicores {
        Millicores(self.vcpus * 1000)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vcpus == 0 {
            return Err(Error::Domain(format!("node `{}` needs at least one vCPU", self.name)));
        }
        if !(self.background_millicores >= 0.0)
            || self.background_millicores >= f64::from(self.vcpus) * 1000.0
        {
            return Err(Error::Domain(format!(
                "node `{}`: background load {} must lie in [0, {})",
                self.name,
                self.background_millicores,
                self.vcpus * 1000
            )));
        }
        Ok(())
    }
}

/// The three application services of the remote-measuring pipeline, in
/// processing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    DeviceComm,
    DataProvider,
    DataProcessing,
}

impl Stage {
    pub const PIPELINE: [Stage; 3] = [Stage::DeviceComm, Stage::DataProvider, Stage::DataProcessing];

    pub fn name(self) -> &'static str {
        match self {
            Stage::DeviceComm => "device-comm",
            Stage::DataProvider => "data-provider",
            Stage::DataProcessing => "data-processing",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn next(self) -> Option<Stage> {
        match self {
            Stage::DeviceComm => Some(Stage::DataProvider),
            Stage::DataProvider => Some(Stage::DataProcessing),
            Stage::DataProcessing => None,
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::PIPELINE.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStamp {
    pub stage: Stage,
    pub enqueue: SimTime,
    pub start: Option<SimTime>,
    pub end: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: u64,
    pub created_at: SimTime,
    pub payload_bytes: u64,
    pub source_device: u32,
    pub stage_timestamps: Vec<StageStamp>,
}

impl Message {
    pub fn new(id: u64, created_at: SimTime, payload_bytes: u64, source_device: u32) -> Self {
        Self {
            id,
            created_at,
            payload_bytes,
            source_device,
            stage_timestamps: Vec::with_capacity(Stage::PIPELINE.len()),
        }
    }

    pub fn stamp(&self, stage: Stage) -> Option<&StageStamp> {
        self.stage_timestamps.iter().find(|s| s.stage == stage)
    }

    pub fn completed(&self, stage: Stage) -> Option<SimTime> {
        self.stamp(stage).and_then(|s| s.end)
    }

    /// True when every recorded instant is non-decreasing and no stage
    /// starts before it was enqueued.
    pub fn is_causal(&self) -> bool {
        let mut last = self.created_at;
        for s in &self.stage_timestamps {
            let mut points = vec![s.enqueue];
            points.extend(s.start);
            points.extend(s.end);
            for p in points {
                if p < last {
                    return false;
                }
                last = p;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub time: SimTime,
    pub name: String,
    pub value: f64,
    pub labels: BTreeMap<String, String>,
}

impl MetricSample {
    pub fn new(time: SimTime, name: &str, value: f64, labels: &[(&str, &str)]) -> Self {
        Self {
            time,
            name: name.to_string(),
            value,
            labels: labels
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn qos_examples() {
        let g = ResourceSpec::guaranteed(500, 1 << 28);
        assert_eq!(qos_class_of(&g), QosClass::Guaranteed);
        assert_eq!(qos_class_of(&ResourceSpec::best_effort()), QosClass::BestEffort);
        assert_eq!(qos_class_of(&ResourceSpec::burstable(250)), QosClass::Burstable);
    }

    #[test]
    fn qos_edge_cases() {
        // cpu matches but memory limit missing
        let mut r = ResourceSpec::guaranteed(500, 1 << 20);
        r.mem_limit = None;
        assert_eq!(qos_class_of(&r), QosClass::Burstable);
        // limit only counts as "something set"
        let r = ResourceSpec {
            cpu_limit: Some(Millicores(100)),
            ..Default::default()
        };
        assert_eq!(qos_class_of(&r), QosClass::Burstable);
        let r = ResourceSpec {
            mem_request: Some(1),
            ..Default::default()
        };
        assert_eq!(qos_class_of(&r), QosClass::Burstable);
    }

    #[test]
    fn fraction_examples() {
        let f = millicores_to_fraction(207.15, 4).unwrap();
        assert!((f - 0.0518).abs() <= 1e-4, "{f}");
        assert_eq!(millicores_to_fraction(0.0, 4).unwrap(), 0.0);
        assert_eq!(millicores_to_fraction(4000.0, 4).unwrap(), 1.0);
        assert_eq!(millicores_to_fraction(9000.0, 4).unwrap(), 1.0);
        assert!(matches!(millicores_to_fraction(10.0, 0), Err(Error::Domain(_))));
        assert!(millicores_to_fraction(-1.0, 4).is_err());
    }

    #[test]
    fn shares_examples() {
        assert_eq!(shares_from_request(Millicores(1000)), 1024);
        assert_eq!(shares_from_request(Millicores(0)), 2);
        assert_eq!(shares_from_request(Millicores(500)), 512);
        assert_eq!(shares_from_request(Millicores(1)), 2);
        assert_eq!(shares_from_request(Millicores(250)), 256);
    }

    #[test]
    fn resource_validation() {
        let bad = ResourceSpec {
            cpu_request: Millicores(500),
            cpu_limit: Some(Millicores(400)),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(ResourceSpec::guaranteed(1000, 10).validate().is_ok());
    }

    #[test]
    fn node_validation() {
        let mut n = NodeSpec::new("n", 4);
        n.background_millicores = 4000.0;
        assert!(n.validate().is_err());
        n.background_millicores = 805.8;
        assert!(n.validate().is_ok());
        assert!(NodeSpec::new("z", 0).validate().is_err());
    }

    #[test]
    fn stage_order() {
        assert_eq!(Stage::DeviceComm.next(), Some(Stage::DataProvider));
        assert_eq!(Stage::DataProcessing.next(), None);
        assert_eq!(Stage::from_name("data-provider"), Some(Stage::DataProvider));
    }

    fn any_resources() -> impl Strategy<Value = ResourceSpec> {
        (
            0u32..4000,
            proptest::option::of(0u32..4000),
            proptest::option::of(0u64..1 << 30),
            proptest::option::of(0u64..1 << 30),
        )
            .prop_map(|(req, lim, mreq, mlim)| ResourceSpec {
                cpu_request: Millicores(req),
                cpu_limit: lim.map(|l| Millicores(l.max(req))),
                mem_request: mreq,
                mem_limit: mlim,
            })
    }

    proptest! {
        #[test]
        fn qos_is_deterministic(r in any_resources()) {
            prop_assert_eq!(qos_class_of(&r), qos_class_of(&r));
        }

        #[test]
        fn fraction_is_linear_below_capacity(a in 0.0f64..2000.0, b in 0.0f64..2000.0) {
            let f = |x| millicores_to_fraction(x, 4).unwrap();
            prop_assert!((f(a + b) - (f(a) + f(b))).abs() < 1e-12);
        }

        #[test]
        fn shares_monotone_and_floored(a in 0u32..100_000, b in 0u32..100_000) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(shares_from_request(Millicores(lo)) <= shares_from_request(Millicores(hi)));
            prop_assert!(shares_from_request(Millicores(lo)) >= MIN_SHARES);
        }
    }
}
