//! Per-period CPU time allocation over a cgroup hierarchy.
//!
//! Each level hands its grant to runnable children in proportion to their
//! `cpu.shares`, never giving a child more than its quota or its aggregate
//! demand. Whatever a capped child cannot use is redistributed among the
//! remaining siblings (work conserving). Grants are whole microseconds;
//! fractional shares are settled with largest-remainder apportionment, ties
//! going to the earlier child.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    qos_class_of, shares_from_request, NodeSpec, PodSpec, QosClass, DEFAULT_PERIOD_US, MIN_SHARES,
};

pub const GUARANTEED_TIER_SHARES: u64 = 4096;
pub const BEST_EFFORT_SHARES: u64 = MIN_SHARES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CgroupKind {
    Group,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CgroupNode {
    pub name: String,
    pub kind: CgroupKind,
    pub shares: u64,
    /// CPU time allowed per period; `None` is unlimited.
    pub quota_us: Option<u64>,
    pub period_us: u64,
    pub children: Vec<CgroupNode>,
    /// CPU time wanted during this period. Only meaningful for leaves.
    pub runnable_demand_us: u64,
}

impl CgroupNode {
    pub fn group(name: impl Into<String>, shares: u64, children: Vec<CgroupNode>) -> Self {
        Self {
            name: name.into(),
            kind: CgroupKind::Group,
            shares,
            quota_us: None,
            period_us: DEFAULT_PERIOD_US,
            children,
            runnable_demand_us: 0,
        }
    }

    pub fn leaf(name: impl Into<String>, shares: u64, demand_us: u64) -> Self {
        Self {
            name: name.into(),
            kind: CgroupKind::Leaf,
            shares,
            quota_us: None,
            period_us: DEFAULT_PERIOD_US,
            children: Vec::new(),
            runnable_demand_us: demand_us,
        }
    }

    pub fn with_quota(mut self, quota_us: u64) -> Self {
        self.quota_us = Some(quota_us);
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.kind == CgroupKind::Leaf
    }

    pub fn find(&self, name: &str) -> Option<&CgroupNode> {
        if self.name == name {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(name))
    }

    pub fn find_mut(&mut self, name: &str) -> Option<&mut CgroupNode> {
        if self.name == name {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(name))
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&CgroupNode> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a CgroupNode>) {
        match self.kind {
            CgroupKind::Leaf => out.push(self),
            CgroupKind::Group => self.children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn for_each_leaf_mut(&mut self, f: &mut impl FnMut(&mut CgroupNode)) {
        match self.kind {
            CgroupKind::Leaf => f(self),
            CgroupKind::Group => self.children.iter_mut().for_each(|c| c.for_each_leaf_mut(f)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        self.validate_inner(self.period_us, &mut names)
    }

    fn validate_inner<'a>(&'a self, period_us: u64, leaf_names: &mut HashSet<&'a str>) -> Result<()> {
        if self.shares < MIN_SHARES {
            return Err(Error::Structure(format!(
                "`{}` has shares {} below the minimum of {MIN_SHARES}",
                self.name, self.shares
            )));
        }
        if self.period_us == 0 {
            return Err(Error::Structure(format!("`{}` has a zero period", self.name)));
        }
        if self.period_us != period_us {
            return Err(Error::Structure(format!(
                "`{}` uses period {} µs but its tree uses {period_us} µs",
                self.name, self.period_us
            )));
        }
        if self.quota_us == Some(0) {
            return Err(Error::Structure(format!("`{}` has a zero quota", self.name)));
        }
        match self.kind {
            CgroupKind::Leaf => {
                if !self.children.is_empty() {
                    return Err(Error::Structure(format!("leaf `{}` has children", self.name)));
                }
                if !leaf_names.insert(self.name.as_str()) {
                    return Err(Error::Structure(format!("duplicate leaf name `{}`", self.name)));
                }
            }
            CgroupKind::Group => {
                for child in &self.children {
                    child.validate_inner(period_us, leaf_names)?;
                }
            }
        }
        Ok(())
    }

    /// Most CPU time this subtree can absorb in one period.
    fn effective_cap(&self) -> u64 {
        let own = match self.kind {
            CgroupKind::Leaf => self.runnable_demand_us,
            CgroupKind::Group => self.children.iter().map(CgroupNode::effective_cap).sum(),
        };
        self.quota_us.map_or(own, |q| own.min(q))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationResult {
    /// Leaf name to granted CPU time.
    pub grants: BTreeMap<String, u64>,
    /// Group name to the grant its whole subtree received.
    pub group_grants: BTreeMap<String, u64>,
    pub total_used_us: u64,
    pub capacity_us: u64,
}

impl AllocationResult {
    pub fn grant(&self, leaf: &str) -> u64 {
        self.grants.get(leaf).copied().unwrap_or(0)
    }

    pub fn idle_us(&self) -> u64 {
        self.capacity_us - self.total_used_us
    }
}

/// Splits one period's `capacity_us` over the tree rooted at `root`.
pub fn allocate_period(root: &CgroupNode, capacity_us: u64) -> Result<AllocationResult> {
    root.validate()?;
    let mut result = AllocationResult {
        grants: BTreeMap::new(),
        group_grants: BTreeMap::new(),
        total_used_us: 0,
        capacity_us,
    };
    let grant = capacity_us.min(root.effective_cap());
    result.total_used_us = grant;
    distribute(root, grant, &mut |node, g| match node.kind {
        CgroupKind::Leaf => {
            result.grants.insert(node.name.clone(), g);
        }
        CgroupKind::Group => {
            result.group_grants.insert(node.name.clone(), g);
        }
    });
    Ok(result)
}

/// Leaf grants in depth-first leaf order. Skips validation and name maps;
/// used on the simulator's hot path with trees it built itself.
pub fn allocate_leaves(root: &CgroupNode, capacity_us: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let grant = capacity_us.min(root.effective_cap());
    distribute(root, grant, &mut |node, g| {
        if node.is_leaf() {
            out.push(g);
        }
    });
    out
}

fn distribute(node: &CgroupNode, grant: u64, visit: &mut impl FnMut(&CgroupNode, u64)) {
    visit(node, grant);
    if node.is_leaf() || node.children.is_empty() {
        return;
    }
    let caps: Vec<u64> = node.children.iter().map(CgroupNode::effective_cap).collect();
    let weights: Vec<u64> = node.children.iter().map(|c| c.shares).collect();
    let split = water_fill(grant, &caps, &weights);
    for (child, g) in node.children.iter().zip(split) {
        distribute(child, g, visit);
    }
}

/// Weighted max-min split of `grant` over children with integer caps.
///
/// Requires `grant <= caps.sum()`. Exact: proportional shares are kept as
/// numerators over the common weight sum, so remainders compare without
/// floating point error.
pub(crate) fn water_fill(grant: u64, caps: &[u64], weights: &[u64]) -> Vec<u64> {
    debug_assert!(grant <= caps.iter().sum::<u64>());
    let n = caps.len();
    let mut out = vec![0u64; n];
    let mut active: Vec<usize> = (0..n).filter(|&i| caps[i] > 0).collect();
    let mut remaining = grant;

    loop {
        if remaining == 0 || active.is_empty() {
            return out;
        }
        let weight_sum: u128 = active.iter().map(|&i| u128::from(weights[i])).sum();
        let (saturated, still_active): (Vec<usize>, Vec<usize>) = active.iter().partition(|&&i| {
            u128::from(caps[i]) * weight_sum <= u128::from(remaining) * u128::from(weights[i])
        });
        if saturated.is_empty() {
            break;
        }
        for i in saturated {
            out[i] = caps[i];
            remaining -= caps[i];
        }
        active = still_active;
    }

    let weight_sum: u128 = active.iter().map(|&i| u128::from(weights[i])).sum();
    let mut remainders = Vec::with_capacity(active.len());
    let mut assigned = 0u64;
    for &i in &active {
        let exact = u128::from(remaining) * u128::from(weights[i]);
        let floor = (exact / weight_sum) as u64;
        out[i] = floor;
        assigned += floor;
        remainders.push((exact % weight_sum, i));
    }
    let leftover = (remaining - assigned) as usize;
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(leftover) {
        out[i] += 1;
    }
    out
}

/// Whole vCPUs granted exclusively to pods under the static CPU-manager policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reservation {
    pub dedicated: Vec<(String, u32)>,
    pub shared_vcpus: u32,
    pub shared_capacity_us: u64,
}

impl Reservation {
    pub fn dedicated_vcpus(&self, pod: &str) -> Option<u32> {
        self.dedicated.iter().find(|(id, _)| id == pod).map(|(_, n)| *n)
    }
}

pub fn is_dedicated_eligible(pod: &PodSpec) -> bool {
    pod.dedicated_cpu_eligible
        && qos_class_of(&pod.resources) == QosClass::Guaranteed
        && pod.resources.cpu_request.is_whole_vcpus()
}

/// Carves dedicated CPUs out of `node` for eligible pods, in list order.
pub fn reserve_dedicated_cpus(
    pods: &[PodSpec],
    node: &NodeSpec,
    static_policy: bool,
    period_us: u64,
) -> Result<Reservation> {
    let mut dedicated = Vec::new();
    let mut free = node.vcpus;
    if static_policy {
        for pod in pods.iter().filter(|p| is_dedicated_eligible(p)) {
            let want = pod.resources.cpu_request.get() / 1000;
            if want > free {
                return Err(Error::Placement {
                    pod: pod.id.clone(),
                    reason: format!(
                        "needs {want} dedicated vCPUs but only {free} of {} remain on `{}`",
                        node.vcpus, node.name
                    ),
                });
            }
            free -= want;
            dedicated.push((pod.id.clone(), want));
        }
    }
    Ok(Reservation {
        dedicated,
        shared_vcpus: free,
        shared_capacity_us: u64::from(free) * period_us,
    })
}

pub const TIER_GUARANTEED: &str = "guaranteed";
pub const TIER_BURSTABLE: &str = "burstable";
pub const TIER_BEST_EFFORT: &str = "besteffort";

/// kubelet-style layout: root, then one tier per QoS class, then one leaf per pod.
pub fn build_node_hierarchy(pods: &[PodSpec], period_us: u64) -> CgroupNode {
    let mut tiers: [Vec<CgroupNode>; 3] = Default::default();
    for pod in pods {
        let qos = pod.qos();
        let shares = match qos {
            QosClass::BestEffort => BEST_EFFORT_SHARES,
            _ => shares_from_request(pod.resources.cpu_request),
        };
        let mut leaf = CgroupNode::leaf(pod.id.clone(), shares, 0);
        leaf.period_us = period_us;
        if let Some(limit) = pod.resources.cpu_limit {
            // a zero limit is treated as "no limit"
            if limit.get() > 0 {
                leaf.quota_us = Some(u64::from(limit.get()) * period_us / 1000);
            }
        }
        let slot = match qos {
            QosClass::Guaranteed => 0,
            QosClass::Burstable => 1,
            QosClass::BestEffort => 2,
        };
        tiers[slot].push(leaf);
    }
    let [guaranteed, burstable, best_effort] = tiers;
    let burstable_shares = burstable.iter().map(|c| c.shares).sum::<u64>().max(MIN_SHARES);
    let mut root = CgroupNode::group(
        "kubepods",
        1024,
        vec![
            CgroupNode::group(TIER_GUARANTEED, GUARANTEED_TIER_SHARES, guaranteed),
            CgroupNode::group(TIER_BURSTABLE, burstable_shares, burstable),
            CgroupNode::group(TIER_BEST_EFFORT, BEST_EFFORT_SHARES, best_effort),
        ],
    );
    set_period(&mut root, period_us);
    root
}

fn set_period(node: &mut CgroupNode, period_us: u64) {
    node.period_us = period_us;
    node.children.iter_mut().for_each(|c| set_period(c, period_us));
}
