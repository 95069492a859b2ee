//! Scaling policies and pod placement.
//!
//! Two policies are provided. The service-based policy runs one horizontal
//! pod autoscaler per deployment. The node-based policy adds or removes a
//! whole node when the average node utilization leaves a band, and keeps
//! every deployment at one replica per node.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterState;
use crate::error::{Error, Result};
use crate::model::{NodeRole, PodSpec, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpaTarget {
    #[serde(default = "default_metric")]
    pub metric: String,
    pub desired: f64,
}

fn default_metric() -> String {
    "cpu-utilization".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpaPolicy {
    pub targets: BTreeMap<String, HpaTarget>,
    #[serde(default = "one")]
    pub min_replicas: u32,
    #[serde(default = "default_max_replicas")]
    pub max_replicas: u32,
    #[serde(default = "default_sync_period")]
    pub sync_period_s: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn one() -> u32 {
    1
}
fn default_max_replicas() -> u32 {
    10
}
fn default_sync_period() -> f64 {
    15.0
}
fn default_tolerance() -> f64 {
    0.1
}

impl HpaPolicy {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.min_replicas < 1 || self.min_replicas > self.max_replicas {
            problems.push(format!(
                "replica bounds must satisfy 1 <= min <= max, got [{}, {}]",
                self.min_replicas, self.max_replicas
            ));
        }
        if !(self.tolerance >= 0.0) {
            problems.push(format!("tolerance must be >= 0, got {}", self.tolerance));
        }
        if !(self.sync_period_s > 0.0) {
            problems.push(format!("sync_period_s must be > 0, got {}", self.sync_period_s));
        }
        for (dep, t) in &self.targets {
            if !(t.desired > 0.0) {
                problems.push(format!("targets.{dep}.desired must be > 0, got {}", t.desired));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodePolicy {
    pub upper_threshold: f64,
    pub lower_threshold: f64,
    #[serde(default = "one")]
    pub min_nodes: u32,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: u32,
    #[serde(default = "default_control_period")]
    pub control_period_s: f64,
}

fn default_max_nodes() -> u32 {
    4
}
fn default_control_period() -> f64 {
    30.0
}

impl NodePolicy {
    pub fn new(lower_threshold: f64, upper_threshold: f64) -> Self {
        Self {
            upper_threshold,
            lower_threshold,
            min_nodes: 1,
            max_nodes: default_max_nodes(),
            control_period_s: default_control_period(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let unit = 0.0..=1.0;
        if !unit.contains(&self.upper_threshold) || !unit.contains(&self.lower_threshold) {
            problems.push("thresholds must lie in [0, 1]".to_string());
        }
        if !(self.lower_threshold < self.upper_threshold) {
            problems.push(format!(
                "lower_threshold {} must be below upper_threshold {}",
                self.lower_threshold, self.upper_threshold
            ));
        }
        if self.min_nodes < 1 || self.min_nodes > self.max_nodes {
            problems.push(format!(
                "node bounds must satisfy 1 <= min <= max, got [{}, {}]",
                self.min_nodes, self.max_nodes
            ));
        }
        if !(self.control_period_s > 0.0) {
            problems.push(format!("control_period_s must be > 0, got {}", self.control_period_s));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
pub enum ScaleAction {
    AddNode,
    RemoveNode,
    ScaleOut { deployment: String },
    ScaleIn { deployment: String },
    SetReplicas { deployment: String, from: u32, to: u32 },
}

/// Replica count suggested by the HPA rule
/// `ceil(current * metric_current / metric_desired)`, clamped to the
/// replica bounds. Inside the tolerance band the current count is kept.
pub fn hpa_desired_replicas(
    current: u32,
    metric_current: f64,
    metric_desired: f64,
    tolerance: f64,
    min_replicas: u32,
    max_replicas: u32,
) -> Result<u32> {
    if !(metric_desired > 0.0) {
        return Err(Error::Domain(format!("desired metric must be > 0, got {metric_desired}")));
    }
    if !(metric_current >= 0.0) {
        return Err(Error::Domain(format!("current metric must be >= 0, got {metric_current}")));
    }
    let ratio = metric_current / metric_desired;
    if (ratio - 1.0).abs() <= tolerance + 1e-12 {
        return Ok(current);
    }
    let raw = f64::from(current) * metric_current / metric_desired;
    // Products like 10 * 0.3 land a few ulps above the integer they denote.
    let nearest = raw.round();
    let raw = if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { raw.ceil() };
    let raw = if raw >= f64::from(u32::MAX) { u32::MAX } else { raw as u32 };
    Ok(raw.clamp(min_replicas, max_replicas))
}

/// One pass of the node-based controller. The returned actions keep the
/// node count equal to every deployment's replica count.
pub fn node_policy_step(state: &ClusterState, avg_utilization: f64, policy: &NodePolicy) -> Vec<ScaleAction> {
    let nodes = state.app_node_count();
    let deployments = state.deployment_names();
    let mut actions = Vec::new();
    if avg_utilization > policy.upper_threshold && nodes < policy.max_nodes {
        actions.push(ScaleAction::AddNode);
        actions.extend(deployments.into_iter().map(|deployment| ScaleAction::ScaleOut { deployment }));
    } else if avg_utilization < policy.lower_threshold && nodes > policy.min_nodes {
        actions.push(ScaleAction::RemoveNode);
        actions.extend(deployments.into_iter().map(|deployment| ScaleAction::ScaleIn { deployment }));
    }
    actions
}

/// One HPA sync over all deployments with a target. `metrics` maps a
/// deployment to its current averaged metric value.
pub fn hpa_step(state: &ClusterState, metrics: &BTreeMap<String, f64>, policy: &HpaPolicy) -> Result<Vec<ScaleAction>> {
    let mut actions = Vec::new();
    for (deployment, target) in &policy.targets {
        let Some(&current_metric) = metrics.get(deployment) else {
            continue;
        };
        let current = state.replicas(deployment);
        if current == 0 {
            continue;
        }
        let desired = hpa_desired_replicas(
            current,
            current_metric,
            target.desired,
            policy.tolerance,
            policy.min_replicas,
            policy.max_replicas,
        )?;
        if desired != current {
            actions.push(ScaleAction::SetReplicas {
                deployment: deployment.clone(),
                from: current,
                to: desired,
            });
        }
    }
    Ok(actions)
}

/// Filter then score: keep schedulable application nodes with enough
/// unrequested allocatable CPU, prefer the lowest requested ratio after
/// placement, break ties by node name.
pub fn place_pod(pod: &PodSpec, state: &ClusterState) -> Result<String> {
    let request = u64::from(pod.resources.cpu_request.get());
    let mut best: Option<(u64, u64, &str)> = None;
    for node in state.nodes() {
        if node.spec.role != NodeRole::App || node.cordoned {
            continue;
        }
        let allocatable = u64::from(node.spec.allocatable().get());
        let requested = u64::from(state.requested_on(&node.spec.name).get());
        if requested + request > allocatable {
            continue;
        }
        let after = requested + request;
        let better = match best {
            None => true,
            Some((b_after, b_alloc, b_name)) => {
                // after / allocatable < b_after / b_alloc
                let lhs = u128::from(after) * u128::from(b_alloc);
                let rhs = u128::from(b_after) * u128::from(allocatable);
                lhs < rhs || (lhs == rhs && node.spec.name.as_str() < b_name)
            }
        };
        if better {
            best = Some((after, allocatable, node.spec.name.as_str()));
        }
    }
    best.map(|(_, _, name)| name.to_string()).ok_or_else(|| Error::Placement {
        pod: pod.id.clone(),
        reason: format!("no schedulable node has {request}m unrequested CPU"),
    })
}

/// Scaling event as exported to the JSON-lines log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingEvent {
    pub time_ms: f64,
    pub policy: String,
    pub action: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub deployment: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub node: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replicas_after: Option<u32>,
    pub nodes_after: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Applies actions in order. Failed placements are logged and skipped; the
/// next control pass retries them.
pub fn apply_actions(state: &mut ClusterState, actions: &[ScaleAction], policy: &str, now: SimTime) -> Vec<ScalingEvent> {
    let time_ms = crate::model::us_to_ms(now);
    let mut events = Vec::new();
    for action in actions {
        let mut event = ScalingEvent {
            time_ms,
            policy: policy.to_string(),
            action: String::new(),
            deployment: None,
            node: None,
            replicas_after: None,
            nodes_after: 0,
            error: None,
        };
        match action {
            ScaleAction::AddNode => {
                event.action = "add-node".into();
                event.node = Some(state.add_node());
            }
            ScaleAction::RemoveNode => {
                event.action = "remove-node".into();
                event.node = state.cordon_newest_node();
            }
            ScaleAction::ScaleOut { deployment } => {
                event.action = "scale-out".into();
                event.deployment = Some(deployment.clone());
                match state.scale_out(deployment) {
                    Ok(pod) => event.node = state.pod(&pod).map(|p| p.node.clone()),
                    Err(e) => event.error = Some(e.to_string()),
                }
            }
            ScaleAction::ScaleIn { deployment } => {
                event.action = "scale-in".into();
                event.deployment = Some(deployment.clone());
                event.node = state.scale_in(deployment).map(|p| p.node);
            }
            ScaleAction::SetReplicas { deployment, to, .. } => {
                event.action = "set-replicas".into();
                event.deployment = Some(deployment.clone());
                while state.replicas(deployment) < *to {
                    if let Err(e) = state.scale_out(deployment) {
                        event.error = Some(e.to_string());
                        break;
                    }
                }
                while state.replicas(deployment) > *to {
                    state.scale_in(deployment);
                }
            }
        }
        state.reap_cordoned();
        event.replicas_after = event.deployment.as_deref().map(|d| state.replicas(d));
        event.nodes_after = state.app_node_count();
        events.push(event);
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::cluster::DeploymentTemplate;
    use crate::model::{NodeSpec, ResourceSpec};

    fn cluster(nodes: u32) -> ClusterState {
        let specs = (1..=nodes).map(|i| NodeSpec::new(format!("worker-{i}"), 4)).collect();
        let mut s = ClusterState::new(specs, NodeSpec::new("worker", 4)).unwrap();
        for dep in ["device-comm", "data-provider", "data-processing"] {
            s.add_deployment(
                dep,
                DeploymentTemplate {
                    resources: ResourceSpec::burstable(500),
                    dedicated_cpu_eligible: false,
                },
            );
            for _ in 0..nodes {
                s.scale_out(dep).unwrap();
            }
        }
        s
    }

    #[test]
    fn hpa_examples() {
        assert_eq!(hpa_desired_replicas(2, 200.0, 100.0, 0.0, 1, 100).unwrap(), 4);
        assert_eq!(hpa_desired_replicas(3, 100.0, 100.0, 0.1, 1, 100).unwrap(), 3);
        assert_eq!(hpa_desired_replicas(5, 30.0, 100.0, 0.0, 1, 100).unwrap(), 2);
        assert_eq!(hpa_desired_replicas(4, 1000.0, 100.0, 0.1, 1, 4).unwrap(), 4);
        assert_eq!(hpa_desired_replicas(4, 0.0, 100.0, 0.1, 1, 4).unwrap(), 1);
        assert!(hpa_desired_replicas(1, 1.0, 0.0, 0.1, 1, 4).is_err());
    }

    #[test]
    fn node_policy_scale_out_keeps_lockstep() {
        let mut s = cluster(2);
        let policy = NodePolicy::new(0.2, 0.8);
        let actions = node_policy_step(&s, 0.85, &policy);
        assert_eq!(actions.len(), 4);
        assert_eq!(actions[0], ScaleAction::AddNode);
        apply_actions(&mut s, &actions, "node-based", 0);
        assert_eq!(s.app_node_count(), 3);
        for dep in s.deployment_names() {
            assert_eq!(s.replicas(&dep), 3);
        }
        // new replicas land on the new node
        assert_eq!(s.pods_on("worker-3").count(), 3);
    }

    #[test]
    fn node_policy_deadband_and_saturation() {
        let policy = NodePolicy::new(0.2, 0.8);
        assert!(node_policy_step(&cluster(2), 0.5, &policy).is_empty());
        assert!(node_policy_step(&cluster(4), 0.99, &policy).is_empty());
        assert!(node_policy_step(&cluster(1), 0.01, &policy).is_empty());
    }

    #[test]
    fn node_policy_scale_in_removes_newest_node() {
        let mut s = cluster(1);
        let policy = NodePolicy::new(0.2, 0.8);
        let up = node_policy_step(&s, 0.9, &policy);
        apply_actions(&mut s, &up, "node-based", 0);
        let down = node_policy_step(&s, 0.1, &policy);
        let events = apply_actions(&mut s, &down, "node-based", 1000);
        assert_eq!(events[0].node.as_deref(), Some("worker-2"));
        assert_eq!(s.app_node_count(), 1);
        assert!(s.node("worker-2").is_none());
        assert!(s.pods().iter().all(|p| p.node == "worker-1"));
    }

    #[test]
    fn placement_tie_breaks_by_name() {
        let s = ClusterState::new(
            vec![NodeSpec::new("node-b", 4), NodeSpec::new("node-a", 4)],
            NodeSpec::new("w", 4),
        )
        .unwrap();
        let pod = PodSpec::new("x", "d", ResourceSpec::burstable(100));
        assert_eq!(place_pod(&pod, &s).unwrap(), "node-a");
    }

    #[test]
    fn placement_filters_full_nodes() {
        let mut s = ClusterState::new(
            vec![NodeSpec::new("a", 4), NodeSpec::new("b", 4)],
            NodeSpec::new("w", 4),
        )
        .unwrap();
        s.add_deployment("big", DeploymentTemplate { resources: ResourceSpec::burstable(3900), dedicated_cpu_eligible: false });
        s.add_deployment("small", DeploymentTemplate { resources: ResourceSpec::burstable(100), dedicated_cpu_eligible: false });
        s.scale_out("big").unwrap(); // lands on a
        s.scale_out("small").unwrap(); // lands on b
        assert_eq!(s.requested_on("a").get(), 3900);
        assert_eq!(s.requested_on("b").get(), 100);
        let pod = PodSpec::new("x", "d", ResourceSpec::burstable(200));
        assert_eq!(place_pod(&pod, &s).unwrap(), "b");
        let huge = PodSpec::new("y", "d", ResourceSpec::burstable(4000));
        assert!(matches!(place_pod(&huge, &s), Err(Error::Placement { .. })));
    }

    #[test]
    fn placement_skips_broker_and_db_nodes() {
        let mut broker = NodeSpec::new("a-broker", 8);
        broker.role = NodeRole::Broker;
        let mut db = NodeSpec::new("a-db", 8);
        db.role = NodeRole::Db;
        let s = ClusterState::new(vec![broker, db, NodeSpec::new("z-worker", 1)], NodeSpec::new("w", 4)).unwrap();
        for i in 0..5 {
            let pod = PodSpec::new(format!("p{i}"), "d", ResourceSpec::best_effort());
            assert_eq!(place_pod(&pod, &s).unwrap(), "z-worker");
        }
    }

    #[test]
    fn hpa_step_scales_only_the_hot_deployment() {
        let s = cluster(1);
        let policy = HpaPolicy {
            targets: s
                .deployment_names()
                .into_iter()
                .map(|d| (d, HpaTarget { metric: default_metric(), desired: 0.5 }))
                .collect(),
            min_replicas: 1,
            max_replicas: 4,
            sync_period_s: 15.0,
            tolerance: 0.1,
        };
        let mut metrics: BTreeMap<String, f64> = s.deployment_names().into_iter().map(|d| (d, 0.5)).collect();
        assert!(hpa_step(&s, &metrics, &policy).unwrap().is_empty());
        metrics.insert("data-provider".into(), 1.0);
        let actions = hpa_step(&s, &metrics, &policy).unwrap();
        assert_eq!(
            actions,
            vec![ScaleAction::SetReplicas { deployment: "data-provider".into(), from: 1, to: 2 }]
        );
        let mut s2 = s.clone();
        apply_actions(&mut s2, &actions, "hpa", 0);
        assert_eq!(s2.replicas("data-provider"), 2);
        assert_eq!(s2.replicas("device-comm"), 1);
        // pure: same inputs, same output
        assert_eq!(hpa_step(&s, &metrics, &policy).unwrap(), actions);
    }

    #[test]
    fn hpa_step_clamps_at_max() {
        let mut s = cluster(1);
        for _ in 0..3 {
            s.scale_out("device-comm").unwrap();
        }
        let policy = HpaPolicy {
            targets: [("device-comm".to_string(), HpaTarget { metric: default_metric(), desired: 0.1 })].into(),
            min_replicas: 1,
            max_replicas: 4,
            sync_period_s: 15.0,
            tolerance: 0.1,
        };
        let metrics = [("device-comm".to_string(), 1.0)].into();
        assert!(hpa_step(&s, &metrics, &policy).unwrap().is_empty());
    }

    #[test]
    fn policy_validation() {
        assert!(NodePolicy::new(0.8, 0.2).validate().is_err());
        assert!(NodePolicy::new(0.2, 0.8).validate().is_ok());
        let mut p = NodePolicy::new(0.2, 0.8);
        p.max_nodes = 0;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn hpa_monotone_in_current_metric(
            current in 1u32..50,
            a in 0.0f64..5.0,
            b in 0.0f64..5.0,
            desired in 0.05f64..2.0,
            tol in 0.0f64..0.3,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let r_lo = hpa_desired_replicas(current, lo, desired, tol, 1, 100).unwrap();
            let r_hi = hpa_desired_replicas(current, hi, desired, tol, 1, 100).unwrap();
            prop_assert!(r_lo <= r_hi);
        }

        #[test]
        fn hpa_invariant_under_metric_scale(
            current in 1u32..50,
            mc in 0.0f64..5.0,
            md in 0.05f64..2.0,
            k in prop::sample::select(vec![0.25, 0.5, 2.0, 8.0, 1024.0]),
        ) {
            prop_assert_eq!(
                hpa_desired_replicas(current, mc, md, 0.1, 1, 100).unwrap(),
                hpa_desired_replicas(current, mc * k, md * k, 0.1, 1, 100).unwrap()
            );
        }
    }
}
