//! Control-plane view of the cluster: nodes, deployments and placed pods.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Millicores, NodeRole, NodeSpec, PodSpec, ResourceSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentTemplate {
    pub resources: ResourceSpec,
    #[serde(default)]
    pub dedicated_cpu_eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedPod {
    pub spec: PodSpec,
    pub node: String,
    /// Creation order; larger is newer.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub spec: NodeSpec,
    /// Marked for removal: receives no new pods and disappears once empty.
    pub cordoned: bool,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    nodes: Vec<ClusterNode>,
    pods: Vec<PlacedPod>,
    deployments: BTreeMap<String, DeploymentTemplate>,
    node_template: NodeSpec,
    next_seq: u64,
    next_node_index: u32,
}

impl ClusterState {
    /// A cluster with the given nodes and no pods. `node_template` is
    /// cloned whenever a node is added.
    pub fn new(nodes: Vec<NodeSpec>, node_template: NodeSpec) -> Result<Self> {
        let mut state = Self {
            nodes: Vec::new(),
            pods: Vec::new(),
            deployments: BTreeMap::new(),
            node_template,
            next_seq: 0,
            next_node_index: 0,
        };
        for spec in nodes {
            spec.validate()?;
            if state.node(&spec.name).is_some() {
                return Err(Error::Config(vec![format!("duplicate node name `{}`", spec.name)]));
            }
            let seq = state.bump();
            state.nodes.push(ClusterNode {
                spec,
                cordoned: false,
                seq,
            });
        }
        state.next_node_index = state.nodes.len() as u32;
        Ok(state)
    }

    fn bump(&mut self) -> u64 {
        self.next_seq += 1;
        self.next_seq
    }

    pub fn add_deployment(&mut self, name: impl Into<String>, template: DeploymentTemplate) {
        self.deployments.insert(name.into(), template);
    }

    pub fn deployments(&self) -> impl Iterator<Item = (&String, &DeploymentTemplate)> {
        self.deployments.iter()
    }

    pub fn deployment_names(&self) -> Vec<String> {
        self.deployments.keys().cloned().collect()
    }

    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Option<&ClusterNode> {
        self.nodes.iter().find(|n| n.spec.name == name)
    }

    pub fn pods(&self) -> &[PlacedPod] {
        &self.pods
    }

    pub fn pod(&self, id: &str) -> Option<&PlacedPod> {
        self.pods.iter().find(|p| p.spec.id == id)
    }

    /// Schedulable application nodes.
    pub fn app_nodes(&self) -> impl Iterator<Item = &ClusterNode> {
        self.nodes
            .iter()
            .filter(|n| n.spec.role == NodeRole::App && !n.cordoned)
    }

    pub fn app_node_count(&self) -> u32 {
        self.app_nodes().count() as u32
    }

    pub fn replicas(&self, deployment: &str) -> u32 {
        self.pods.iter().filter(|p| p.spec.deployment == deployment).count() as u32
    }

    pub fn pods_on(&self, node: &str) -> impl Iterator<Item = &PlacedPod> + '_ {
        let node = node.to_string();
        self.pods.iter().filter(move |p| p.node == node)
    }

    pub fn requested_on(&self, node: &str) -> Millicores {
        Millicores(self.pods_on(node).map(|p| p.spec.resources.cpu_request.get()).sum())
    }

    /// Creates one pod for `deployment` and places it. Returns the pod id.
    pub fn scale_out(&mut self, deployment: &str) -> Result<String> {
        let template = self
            .deployments
            .get(deployment)
            .ok_or_else(|| Error::Config(vec![format!("unknown deployment `{deployment}`")]))?
            .clone();
        let seq = self.next_seq + 1;
        let mut spec = PodSpec::new(format!("{deployment}-{seq}"), deployment, template.resources);
        spec.dedicated_cpu_eligible = template.dedicated_cpu_eligible;
        let node = crate::autoscale::place_pod(&spec, self)?;
        let seq = self.bump();
        let id = spec.id.clone();
        self.pods.push(PlacedPod { spec, node, seq });
        Ok(id)
    }

    /// Removes one pod of `deployment`: pods on cordoned nodes first, then
    /// the newest. Returns the removed pod, if any existed.
    pub fn scale_in(&mut self, deployment: &str) -> Option<PlacedPod> {
        let idx = self
            .pods
            .iter()
            .enumerate()
            .filter(|(_, p)| p.spec.deployment == deployment)
            .max_by_key(|(_, p)| {
                let cordoned = self.node(&p.node).is_some_and(|n| n.cordoned);
                (cordoned, p.seq)
            })
            .map(|(i, _)| i)?;
        Some(self.pods.remove(idx))
    }

    /// Adds a node cloned from the template. Returns its name.
    pub fn add_node(&mut self) -> String {
        self.next_node_index += 1;
        let mut spec = self.node_template.clone();
        spec.name = format!("{}-{}", self.node_template.name, self.next_node_index);
        spec.role = NodeRole::App;
        while self.node(&spec.name).is_some() {
            self.next_node_index += 1;
            spec.name = format!("{}-{}", self.node_template.name, self.next_node_index);
        }
        let seq = self.bump();
        let name = spec.name.clone();
        self.nodes.push(ClusterNode {
            spec,
            cordoned: false,
            seq,
        });
        name
    }

    /// Cordons the newest schedulable application node.
    pub fn cordon_newest_node(&mut self) -> Option<String> {
        let node = self
            .nodes
            .iter_mut()
            .filter(|n| n.spec.role == NodeRole::App && !n.cordoned)
            .max_by_key(|n| n.seq)?;
        node.cordoned = true;
        Some(node.spec.name.clone())
    }

    /// Drops cordoned nodes that no longer host pods; returns their names.
    pub fn reap_cordoned(&mut self) -> Vec<String> {
        let empty: Vec<String> = self
            .nodes
            .iter()
            .filter(|n| n.cordoned && self.pods_on(&n.spec.name).next().is_none())
            .map(|n| n.spec.name.clone())
            .collect();
        self.nodes.retain(|n| !empty.contains(&n.spec.name));
        empty
    }

    pub fn node_of_role(&self, role: NodeRole) -> Option<&ClusterNode> {
        self.nodes.iter().find(|n| n.spec.role == role)
    }
}
