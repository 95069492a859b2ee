//! CPU model of one node: cgroup grants turned into per-pod service rates.

use crate::cfs::{allocate_leaves, build_node_hierarchy, reserve_dedicated_cpus, CgroupNode};
use crate::error::Result;
use crate::model::{NodeSpec, PodSpec, SimTime};

const BACKGROUND_LEAF: &str = "system";

/// Work below this many CPU microseconds counts as finished.
pub(crate) const DONE_EPS_US: f64 = 1e-6;

/// Cached cgroup tree for a fixed set of pods on one node.
#[derive(Debug, Clone)]
pub(crate) struct NodeCpu {
    root: CgroupNode,
    /// For each shared leaf in depth-first order: `None` for platform
    /// background load, otherwise the pod's position.
    leaf_owner: Vec<Option<usize>>,
    /// Pods pinned to whole CPUs: position and per-period capacity.
    dedicated: Vec<(usize, u64)>,
    quotas: Vec<Option<u64>>,
    shared_capacity_us: u64,
    background_demand_us: u64,
    period_us: u64,
}

impl NodeCpu {
    pub(crate) fn new(node: &NodeSpec, pods: &[&PodSpec], period_us: u64, static_policy: bool) -> Result<Self> {
        let owned: Vec<PodSpec> = pods.iter().map(|p| (*p).clone()).collect();
        let reservation = reserve_dedicated_cpus(&owned, node, static_policy, period_us)?;
        let mut dedicated = Vec::new();
        let mut shared = Vec::new();
        for (i, pod) in owned.iter().enumerate() {
            match reservation.dedicated_vcpus(&pod.id) {
                Some(n) => dedicated.push((i, u64::from(n) * period_us)),
                None => shared.push(pod.clone()),
            }
        }
        let kubepods = CgroupNode {
            shares: u64::from(node.vcpus) * 1024,
            ..build_node_hierarchy(&shared, period_us)
        };
        let background_demand_us = (node.background_millicores * period_us as f64 / 1000.0).round() as u64;
        let mut background = CgroupNode::leaf(BACKGROUND_LEAF, 1024, background_demand_us);
        background.period_us = period_us;
        let mut root = CgroupNode::group("node", 1024, vec![background, kubepods]);
        root.period_us = period_us;

        let leaf_owner = root
            .leaves()
            .iter()
            .map(|leaf| {
                if leaf.name == BACKGROUND_LEAF {
                    None
                } else {
                    owned.iter().position(|p| p.id == leaf.name)
                }
            })
            .collect();
        let quotas = owned
            .iter()
            .map(|p| {
                p.resources
                    .cpu_limit
                    .filter(|l| l.get() > 0)
                    .map(|l| u64::from(l.get()) * period_us / 1000)
            })
            .collect();
        Ok(Self {
            root,
            leaf_owner,
            dedicated,
            quotas,
            shared_capacity_us: reservation.shared_capacity_us,
            background_demand_us,
            period_us,
        })
    }

    /// Per-period grants for each pod given how many of its workers are
    /// running on CPU, plus the background grant.
    pub(crate) fn grants(&mut self, busy_workers: &[u32]) -> (Vec<u64>, u64) {
        let period = self.period_us;
        let background = self.background_demand_us;
        let owners = &self.leaf_owner;
        let mut i = 0;
        self.root.for_each_leaf_mut(&mut |leaf| {
            leaf.runnable_demand_us = match owners[i] {
                None => background,
                Some(p) => u64::from(busy_workers[p]) * period,
            };
            i += 1;
        });
        let leaf_grants = allocate_leaves(&self.root, self.shared_capacity_us);
        let mut out = vec![0u64; busy_workers.len()];
        let mut background_grant = 0;
        for (owner, g) in self.leaf_owner.iter().zip(leaf_grants) {
            match owner {
                None => background_grant = g,
                Some(p) => out[*p] = g,
            }
        }
        for &(p, cap) in &self.dedicated {
            let want = u64::from(busy_workers[p]) * period;
            out[p] = want.min(cap).min(self.quotas[p].unwrap_or(u64::MAX));
        }
        (out, background_grant)
    }
}

/// A pod on the node and the CPU work left for each of its running workers.
#[derive(Debug, Clone, PartialEq)]
pub struct BusyPod {
    pub spec: PodSpec,
    pub remaining_us: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub pod: usize,
    pub worker: usize,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodOutcome {
    pub completions: Vec<Completion>,
    /// CPU time consumed on the node, background included.
    pub used_us: f64,
    /// Node-wide usage over the period in millicores.
    pub millicores: f64,
}

/// Advances every running worker on `node` through one scheduling period
/// starting at `now`. Rates are recomputed whenever a worker finishes, so a
/// completion frees capacity for the rest of the period; completion
/// instants are interpolated within the period.
pub fn step_period(
    node: &NodeSpec,
    pods: &mut [BusyPod],
    now: SimTime,
    period_us: u64,
    static_policy: bool,
) -> Result<PeriodOutcome> {
    let specs: Vec<&PodSpec> = pods.iter().map(|p| &p.spec).collect();
    let mut cpu = NodeCpu::new(node, &specs, period_us, static_policy)?;
    let period = period_us as f64;
    let mut t = 0.0;
    let mut used = 0.0;
    let mut completions = Vec::new();
    while t < period {
        let busy: Vec<u32> = pods
            .iter()
            .map(|p| p.remaining_us.iter().filter(|r| **r > DONE_EPS_US).count() as u32)
            .collect();
        let (grants, background) = cpu.grants(&busy);
        let rates: Vec<f64> = grants
            .iter()
            .zip(&busy)
            .map(|(g, b)| if *b > 0 { *g as f64 / period / f64::from(*b) } else { 0.0 })
            .collect();
        let mut dt = period - t;
        for (pod, rate) in pods.iter().zip(&rates) {
            for r in pod.remaining_us.iter().filter(|r| **r > DONE_EPS_US) {
                if *rate > 0.0 {
                    dt = dt.min(r / rate);
                }
            }
        }
        used += (grants.iter().sum::<u64>() + background) as f64 / period * dt;
        t += dt;
        let mut progressed = false;
        for (p, (pod, rate)) in pods.iter_mut().zip(&rates).enumerate() {
            for (w, r) in pod.remaining_us.iter_mut().enumerate() {
                if *r > DONE_EPS_US {
                    *r -= rate * dt;
                    progressed |= *rate > 0.0;
                    if *r <= DONE_EPS_US {
                        *r = 0.0;
                        completions.push(Completion {
                            pod: p,
                            worker: w,
                            at: now as f64 + t,
                        });
                    }
                }
            }
        }
        if !progressed {
            // Nothing can run (or nothing is left): background for the rest.
            used += background as f64 / period * (period - t);
            break;
        }
    }
    Ok(PeriodOutcome {
        completions,
        used_us: used,
        millicores: used / period * 1000.0,
    })
}
