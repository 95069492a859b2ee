//! Scenario configuration: a versioned JSON document describing topology,
//! deployments, demand, workload, scaling policy and measurement settings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assess::SloSpec;
use crate::autoscale::{HpaPolicy, NodePolicy};
use crate::cluster::{ClusterState, DeploymentTemplate};
use crate::demand::VariabilityModel;
use crate::error::{Error, Result};
use crate::model::{NodeRole, NodeSpec, ResourceSpec, Stage, DEFAULT_PERIOD_US};
use crate::workload::{preset, LoadProfile};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    /// Cloned when a policy adds a node. Defaults to the first app node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_template: Option<NodeSpec>,
    /// Static CPU-manager policy: eligible pods get dedicated whole CPUs.
    #[serde(default)]
    pub static_policy: bool,
    #[serde(default = "default_period")]
    pub period_us: u64,
}

fn default_period() -> u64 {
    DEFAULT_PERIOD_US
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageDemand {
    pub base_ms: f64,
    #[serde(default)]
    pub bytes_coefficient_ms: f64,
}

impl StageDemand {
    pub fn nominal_ms(&self, payload_bytes: u64) -> f64 {
        self.base_ms + self.bytes_coefficient_ms * payload_bytes as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentConfig {
    /// Omitted resources make a best-effort pod.
    #[serde(default)]
    pub resources: ResourceSpec,
    #[serde(default)]
    pub dedicated_cpu_eligible: bool,
    pub demand: StageDemand,
    #[serde(default = "one")]
    pub replicas: u32,
    /// Messages one pod serves concurrently.
    #[serde(default = "one")]
    pub workers: u32,
}

fn one() -> u32 {
    1
}

/// Fixed-delay stations standing in for the message broker and the database.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Delays {
    /// Added to every hand-over between stages.
    #[serde(default)]
    pub broker_ms: f64,
    /// Write performed by data-provider after its CPU work.
    #[serde(default)]
    pub db_write_ms: f64,
    /// Read performed by data-processing before its CPU work.
    #[serde(default)]
    pub db_read_ms: f64,
}

impl Default for Delays {
    fn default() -> Self {
        Self {
            broker_ms: 0.0,
            db_write_ms: 0.0,
            db_read_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DemandModelRef {
    Profile(String),
    Inline(VariabilityModel),
}

impl Default for DemandModelRef {
    fn default() -> Self {
        DemandModelRef::Profile(crate::demand::PAPER_BWCLOUD.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkloadRef {
    Preset(String),
    Inline(LoadProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum PolicyConfig {
    #[default]
    None,
    Hpa(HpaPolicy),
    NodeBased(NodePolicy),
}

impl PolicyConfig {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyConfig::None => "none",
            PolicyConfig::Hpa(_) => "hpa",
            PolicyConfig::NodeBased(_) => "node-based",
        }
    }

    pub fn control_period_s(&self) -> Option<f64> {
        match self {
            PolicyConfig::None => None,
            PolicyConfig::Hpa(p) => Some(p.sync_period_s),
            PolicyConfig::NodeBased(p) => Some(p.control_period_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentConfig {
    #[serde(default = "default_lo")]
    pub lo: u32,
    #[serde(default = "default_hi")]
    pub hi: u32,
    #[serde(default = "default_step")]
    pub step: u32,
    /// Seeds per trial; the trial verdict uses the median p95.
    #[serde(default = "default_seeds")]
    pub seeds: u32,
    /// Leading fraction of simulated time excluded from SLO samples.
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
}

fn default_lo() -> u32 {
    100
}
fn default_hi() -> u32 {
    8000
}
fn default_step() -> u32 {
    100
}
fn default_seeds() -> u32 {
    3
}
fn default_warmup() -> f64 {
    0.1
}

impl Default for AssessmentConfig {
    fn default() -> Self {
        Self {
            lo: default_lo(),
            hi: default_hi(),
            step: default_step(),
            seeds: default_seeds(),
            warmup_fraction: default_warmup(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub topology: Topology,
    pub deployments: BTreeMap<String, DeploymentConfig>,
    #[serde(default)]
    pub delays: Delays,
    #[serde(default)]
    pub demand_model: DemandModelRef,
    pub workload: WorkloadRef,
    #[serde(default)]
    pub policy: PolicyConfig,
    /// Delay between a scale-out decision and the new pod accepting work.
    #[serde(default)]
    pub provisioning_delay_s: f64,
    #[serde(default)]
    pub slo: SloSpec,
    #[serde(default)]
    pub seed: u64,
    pub horizon_s: f64,
    /// Per-stage queue bound; the oldest message is dropped on overflow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_capacity: Option<usize>,
    #[serde(default = "default_sample_interval")]
    pub sample_interval_s: f64,
    /// Trailing window over which utilization is averaged for scaling.
    #[serde(default = "default_utilization_window")]
    pub utilization_window_s: f64,
    #[serde(default)]
    pub assessment: AssessmentConfig,
}

fn default_sample_interval() -> f64 {
    1.0
}
fn default_utilization_window() -> f64 {
    60.0
}

impl ScenarioConfig {
    /// Parses and validates. Every problem is reported with its field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "(root)".to_string() } else { path };
            Error::Config(vec![format!("{path}: {}", e.inner())])
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut push = |path: &str, msg: String| problems.push(format!("{path}: {msg}"));

        if self.schema_version != SCHEMA_VERSION {
            push(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            );
        }

        if self.topology.period_us == 0 {
            push("topology.period_us", "must be > 0".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, node) in self.topology.nodes.iter().enumerate() {
            if let Err(e) = node.validate() {
                push(&format!("topology.nodes[{i}]"), e.to_string());
            }
            if !seen.insert(node.name.as_str()) {
                push(&format!("topology.nodes[{i}].name"), format!("duplicate node `{}`", node.name));
            }
        }
        let app_nodes = self.app_node_count();
        if app_nodes == 0 {
            push("topology.nodes", "at least one app node is required".into());
        }
        for role in [NodeRole::Broker, NodeRole::Db] {
            if self.topology.nodes.iter().filter(|n| n.role == role).count() > 1 {
                push("topology.nodes", format!("at most one {role:?} node is allowed"));
            }
        }
        if let Some(t) = &self.topology.node_template {
            if let Err(e) = t.validate() {
                push("topology.node_template", e.to_string());
            }
        }

        for stage in Stage::PIPELINE {
            if !self.deployments.contains_key(stage.name()) {
                push(&format!("deployments.{}", stage.name()), "missing deployment".into());
            }
        }
        for (name, dep) in &self.deployments {
            let path = format!("deployments.{name}");
            if Stage::from_name(name).is_none() {
                push(&path, "unknown deployment; expected one of device-comm, data-provider, data-processing".into());
            }
            if let Err(e) = dep.resources.validate() {
                push(&format!("{path}.resources"), e.to_string());
            }
            if !(dep.demand.base_ms >= 0.0) || !(dep.demand.bytes_coefficient_ms >= 0.0) {
                push(&format!("{path}.demand"), "demand terms must be >= 0".into());
            }
            if dep.replicas == 0 {
                push(&format!("{path}.replicas"), "must be >= 1".into());
            }
            if dep.workers == 0 {
                push(&format!("{path}.workers"), "must be >= 1".into());
            }
            if let PolicyConfig::NodeBased(_) = self.policy {
                if dep.replicas != app_nodes {
                    push(
                        &format!("{path}.replicas"),
                        format!("node-based scaling needs one replica per app node ({app_nodes})"),
                    );
                }
            }
        }

        for (path, v) in [
            ("delays.broker_ms", self.delays.broker_ms),
            ("delays.db_write_ms", self.delays.db_write_ms),
            ("delays.db_read_ms", self.delays.db_read_ms),
            ("provisioning_delay_s", self.provisioning_delay_s),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                push(path, format!("must be a finite value >= 0, got {v}"));
            }
        }

        match self.variability_model() {
            Ok(m) => {
                if let Err(e) = m.validate() {
                    push("demand_model", e.to_string());
                }
            }
            Err(e) => push("demand_model", e.to_string()),
        }
        match self.load_profile() {
            Ok(p) => {
                if let Err(Error::Config(lines)) = p.validate() {
                    for l in lines {
                        push("workload", l);
                    }
                }
            }
            Err(e) => push("workload", e.to_string()),
        }

        match &self.policy {
            PolicyConfig::None => {}
            PolicyConfig::Hpa(p) => {
                if let Err(Error::Config(lines)) = p.validate() {
                    lines.into_iter().for_each(|l| push("policy", l));
                }
                for dep in p.targets.keys() {
                    if !self.deployments.contains_key(dep) {
                        push(&format!("policy.targets.{dep}"), "unknown deployment".into());
                    }
                }
            }
            PolicyConfig::NodeBased(p) => {
                if let Err(Error::Config(lines)) = p.validate() {
                    lines.into_iter().for_each(|l| push("policy", l));
                }
                if app_nodes < p.min_nodes || app_nodes > p.max_nodes {
                    push(
                        "topology.nodes",
                        format!("{app_nodes} app nodes outside policy bounds [{}, {}]", p.min_nodes, p.max_nodes),
                    );
                }
            }
        }

        if let Err(e) = self.slo.validate() {
            push("slo", e.to_string());
        }
        if !(self.horizon_s > 0.0) || !self.horizon_s.is_finite() {
            push("horizon_s", format!("must be > 0, got {}", self.horizon_s));
        }
        if let Some(0) = self.queue_capacity {
            push("queue_capacity", "must be >= 1 when set".into());
        }
        if !(self.sample_interval_s > 0.0) {
            push("sample_interval_s", "must be > 0".into());
        }
        if !(self.utilization_window_s >= self.sample_interval_s) {
            push("utilization_window_s", "must be at least one sample interval".into());
        }

        let a = &self.assessment;
        if a.step == 0 {
            push("assessment.step", "must be >= 1".into());
        }
        if a.lo >= a.hi {
            push("assessment", format!("lo ({}) must be below hi ({})", a.lo, a.hi));
        }
        if a.seeds == 0 {
            push("assessment.seeds", "must be >= 1".into());
        }
        if !(0.0..1.0).contains(&a.warmup_fraction) {
            push("assessment.warmup_fraction", "must lie in [0, 1)".into());
        }

        if problems.is_empty() {
            // Placement is only checkable once everything else holds.
            if let Err(e) = self.initial_cluster() {
                problems.push(format!("deployments: {e}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn app_node_count(&self) -> u32 {
        self.topology.nodes.iter().filter(|n| n.role == NodeRole::App).count() as u32
    }

    pub fn variability_model(&self) -> Result<VariabilityModel> {
        match &self.demand_model {
            DemandModelRef::Profile(name) => VariabilityModel::profile(name).ok_or_else(|| {
                Error::Config(vec![format!(
                    "unknown demand profile `{name}` (known: {})",
                    VariabilityModel::profile_names().join(", ")
                )])
            }),
            DemandModelRef::Inline(m) => Ok(m.clone()),
        }
    }

    pub fn load_profile(&self) -> Result<LoadProfile> {
        match &self.workload {
            WorkloadRef::Preset(name) => {
                preset(name).ok_or_else(|| Error::Config(vec![format!("unknown workload preset `{name}`")]))
            }
            WorkloadRef::Inline(p) => Ok(p.clone()),
        }
    }

    pub fn deployment(&self, stage: Stage) -> &DeploymentConfig {
        &self.deployments[stage.name()]
    }

    /// Control-plane state at time zero: pods placed stage by stage, one
    /// replica round at a time so replicas spread across nodes.
    pub fn initial_cluster(&self) -> Result<ClusterState> {
        let template = match &self.topology.node_template {
            Some(t) => t.clone(),
            None => {
                let first = self
                    .topology
                    .nodes
                    .iter()
                    .find(|n| n.role == NodeRole::App)
                    .ok_or_else(|| Error::Config(vec!["topology.nodes: no app node".into()]))?;
                let mut t = first.clone();
                t.name = "worker".into();
                t
            }
        };
        let mut state = ClusterState::new(self.topology.nodes.clone(), template)?;
        for stage in Stage::PIPELINE {
            let dep = self.deployment(stage);
            state.add_deployment(
                stage.name(),
                DeploymentTemplate {
                    resources: dep.resources,
                    dedicated_cpu_eligible: dep.dedicated_cpu_eligible,
                },
            );
        }
        let rounds = Stage::PIPELINE.iter().map(|s| self.deployment(*s).replicas).max().unwrap_or(0);
        for round in 0..rounds {
            for stage in Stage::PIPELINE {
                if round < self.deployment(stage).replicas {
                    state.scale_out(stage.name())?;
                }
            }
        }
        Ok(state)
    }

    /// Same scenario with a different device count.
    pub fn with_devices(&self, devices: u32) -> Result<Self> {
        let mut out = self.clone();
        out.workload = WorkloadRef::Inline(self.load_profile()?.with_devices(devices));
        Ok(out)
    }
}
