//! Independent reference implementations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the code under test except
//! to read the input types.

#![allow(dead_code)]

use elastisim::cfs::{CgroupKind, CgroupNode};
use num_rational::Ratio;
use rand::Rng;

pub type Q = Ratio<i128>;

/// Cap of a subtree: leaf demand or the sum of child caps, clipped by quota.
pub fn subtree_cap(node: &CgroupNode) -> u64 {
    let own = match node.kind {
        CgroupKind::Leaf => node.runnable_demand_us,
        CgroupKind::Group => node.children.iter().map(subtree_cap).sum(),
    };
    node.quota_us.map_or(own, |q| own.min(q))
}

/// Exact progressive filling: a common level rises from zero, child `i`
/// holds `min(cap_i, level * w_i)`, and the level stops when the children
/// hold `grant` in total.
pub fn progressive_fill(grant: Q, caps: &[Q], weights: &[i128]) -> Vec<Q> {
    let zero = Q::from_integer(0);
    let total_cap: Q = caps.iter().fold(zero, |a, c| a + c);
    if grant >= total_cap {
        return caps.to_vec();
    }
    let mut order: Vec<usize> = (0..caps.len()).collect();
    order.sort_by(|&a, &b| (caps[a] / weights[a]).cmp(&(caps[b] / weights[b])));
    let mut saturated = zero;
    let mut active_weight: i128 = weights.iter().sum();
    let mut level = zero;
    for &i in &order {
        let breakpoint = caps[i] / weights[i];
        let held = saturated + breakpoint * active_weight;
        if held >= grant {
            level = (grant - saturated) / active_weight;
            break;
        }
        saturated += caps[i];
        active_weight -= weights[i];
    }
    caps.iter()
        .zip(weights)
        .map(|(&c, &w)| std::cmp::min(c, level * w))
        .collect()
}

/// Integer apportionment of exact values: floors first, then one unit each
/// by descending fractional part, ties to the lower index.
pub fn largest_remainder(exact: &[Q], total: u64) -> Vec<u64> {
    let mut out: Vec<u64> = exact.iter().map(|q| q.floor().to_integer() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| exact[b].fract().cmp(&exact[a].fract()).then(a.cmp(&b)));
    for &i in order.iter().take((total - assigned) as usize) {
        out[i] += 1;
    }
    out
}

/// Leaf grants, depth first, from exact filling rounded level by level.
pub fn oracle_allocate(root: &CgroupNode, capacity_us: u64) -> Vec<(String, u64)> {
    let mut out = Vec::new();
    let grant = capacity_us.min(subtree_cap(root));
    descend(root, grant, &mut out);
    out
}

fn descend(node: &CgroupNode, grant: u64, out: &mut Vec<(String, u64)>) {
    if node.kind == CgroupKind::Leaf {
        out.push((node.name.clone(), grant));
        return;
    }
    if node.children.is_empty() {
        return;
    }
    let caps: Vec<Q> = node
        .children
        .iter()
        .map(|c| Q::from_integer(i128::from(subtree_cap(c))))
        .collect();
    let weights: Vec<i128> = node.children.iter().map(|c| i128::from(c.shares)).collect();
    let exact = progressive_fill(Q::from_integer(i128::from(grant)), &caps, &weights);
    let split = largest_remainder(&exact, grant);
    for (child, g) in node.children.iter().zip(split) {
        descend(child, g, out);
    }
}

/// Tree shapes: a leaf or a group of shapes.
#[derive(Debug, Clone)]
pub enum Shape {
    Leaf,
    Group(Vec<Shape>),
}

impl Shape {
    pub fn leaves(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Group(c) => c.iter().map(Shape::leaves).sum(),
        }
    }

    /// Non-root nodes, each of which carries its own shares.
    pub fn weighted_nodes(&self) -> usize {
        match self {
            Shape::Leaf => 0,
            Shape::Group(c) => c.iter().map(|s| 1 + s.weighted_nodes()).sum(),
        }
    }
}

/// Every root group with between one and `max_leaves` leaves whose groups
/// are non-empty and nest at most `max_depth` levels below the root.
pub fn root_shapes(max_leaves: usize, max_depth: usize) -> Vec<Shape> {
    forests(max_leaves, max_depth)
        .into_iter()
        .map(Shape::Group)
        .collect()
}

fn trees(max_leaves: usize, depth: usize) -> Vec<Shape> {
    let mut out = vec![Shape::Leaf];
    if depth > 0 {
        out.extend(forests(max_leaves, depth - 1).into_iter().map(Shape::Group));
    }
    out.retain(|t| t.leaves() <= max_leaves);
    out
}

/// Non-empty ordered sequences of trees with at most `max_leaves` leaves in total.
fn forests(max_leaves: usize, depth: usize) -> Vec<Vec<Shape>> {
    let mut out = Vec::new();
    if max_leaves == 0 {
        return out;
    }
    for head in trees(max_leaves, depth) {
        let used = head.leaves();
        out.push(vec![head.clone()]);
        for tail in forests(max_leaves - used, depth) {
            let mut f = vec![head.clone()];
            f.extend(tail);
            out.push(f);
        }
    }
    out
}

/// Builds a tree from `shape`, taking shares (for non-root nodes, depth
/// first) and leaf demands from the given iterators.
pub fn build(
    shape: &Shape,
    shares: &mut impl Iterator<Item = u64>,
    demands: &mut impl Iterator<Item = u64>,
) -> CgroupNode {
    let mut counter = 0;
    build_inner(shape, 1024, shares, demands, &mut counter)
}

fn build_inner(
    shape: &Shape,
    own_shares: u64,
    shares: &mut impl Iterator<Item = u64>,
    demands: &mut impl Iterator<Item = u64>,
    counter: &mut usize,
) -> CgroupNode {
    *counter += 1;
    let name = format!("n{counter}");
    match shape {
        Shape::Leaf => CgroupNode::leaf(name, own_shares, demands.next().expect("demand")),
        Shape::Group(children) => {
            let kids = children
                .iter()
                .map(|c| {
                    let s = shares.next().expect("shares");
                    build_inner(c, s, shares, demands, counter)
                })
                .collect();
            CgroupNode::group(name, own_shares, kids)
        }
    }
}

/// A random hierarchy of up to `max_leaves` leaves with random shares,
/// demands and occasional quotas. Every node uses `period_us`.
pub fn random_hierarchy<R: Rng>(rng: &mut R, max_leaves: usize, period_us: u64) -> CgroupNode {
    let mut counter = 0;
    let leaves = rng.random_range(1..=max_leaves);
    let mut node = random_group(rng, leaves, 0, period_us, &mut counter);
    node.quota_us = None;
    node
}

fn random_group<R: Rng>(rng: &mut R, leaves: usize, depth: usize, period_us: u64, counter: &mut usize) -> CgroupNode {
    *counter += 1;
    let name = format!("g{counter}");
    let mut children = Vec::new();
    let mut left = leaves;
    while left > 0 {
        let take = rng.random_range(1..=left);
        left -= take;
        if take == 1 || depth >= 3 || rng.random_bool(0.4) {
            for _ in 0..take {
                *counter += 1;
                let mut leaf = CgroupNode::leaf(
                    format!("l{counter}"),
                    rng.random_range(2..=8192),
                    rng.random_range(0..=2 * period_us),
                );
                leaf.period_us = period_us;
                if rng.random_bool(0.25) {
                    leaf.quota_us = Some(rng.random_range(1..=2 * period_us));
                }
                children.push(leaf);
            }
        } else {
            children.push(random_group(rng, take, depth + 1, period_us, counter));
        }
    }
    let mut group = CgroupNode::group(name, rng.random_range(2..=8192), children);
    group.period_us = period_us;
    if rng.random_bool(0.25) {
        group.quota_us = Some(rng.random_range(1..=3 * period_us));
    }
    group
}

/// Problems found when checking an allocation against the scheduling
/// properties; empty when all hold.
pub fn allocation_violations(root: &CgroupNode, capacity_us: u64, leaf_grants: &dyn Fn(&str) -> u64) -> Vec<String> {
    let mut problems = Vec::new();
    let expected_total = capacity_us.min(subtree_cap(root));
    let total = check_node(root, leaf_grants, &mut problems);
    if total > capacity_us {
        problems.push(format!("used {total} µs of {capacity_us}"));
    }
    if total != expected_total {
        problems.push(format!("not work conserving: used {total}, could use {expected_total}"));
    }
    problems
}

/// Returns the subtree grant and checks quota dominance and sibling
/// proportionality below `node`.
fn check_node(node: &CgroupNode, leaf_grants: &dyn Fn(&str) -> u64, problems: &mut Vec<String>) -> u64 {
    let grant = match node.kind {
        CgroupKind::Leaf => {
            let g = leaf_grants(&node.name);
            if g > node.runnable_demand_us {
                problems.push(format!("{} granted {g} above demand {}", node.name, node.runnable_demand_us));
            }
            g
        }
        CgroupKind::Group => {
            let grants: Vec<u64> = node.children.iter().map(|c| check_node(c, leaf_grants, problems)).collect();
            for (i, a) in node.children.iter().enumerate() {
                for (j, b) in node.children.iter().enumerate() {
                    if i == j || grants[i] >= subtree_cap(a) {
                        continue;
                    }
                    // An unsaturated child never trails a sibling's
                    // weight-normalized grant by more than rounding.
                    let lhs = i128::from(grants[i]) + 1;
                    let rhs = i128::from(grants[j]) * i128::from(a.shares);
                    if lhs * i128::from(b.shares) < rhs - i128::from(a.shares) {
                        problems.push(format!(
                            "{} ({} µs, shares {}) trails {} ({} µs, shares {})",
                            a.name, grants[i], a.shares, b.name, grants[j], b.shares
                        ));
                    }
                }
            }
            grants.iter().sum()
        }
    };
    if let Some(q) = node.quota_us {
        if grant > q {
            problems.push(format!("{} granted {grant} above quota {q}", node.name));
        }
    }
    grant
}

/// Ordinary least squares `y = a + b x` by the textbook normal equations,
/// summed in a different order from the library.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    ((sy - slope * sx) / n, slope)
}

/// Pearson coefficient from raw power sums.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Spearman coefficient: Pearson over average ranks, ranks found by counting.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    pearson(&rank(x), &rank(y))
}

/// Node occupancy (pods per node) of the seven-node benchmark cluster.
pub const BENCH_PODS: [f64; 7] = [17.0, 12.0, 12.0, 10.0, 8.0, 7.0, 11.0];
pub const BENCH_MILLICORES: [f64; 7] = [207.15, 805.80, 152.10, 176.85, 133.30, 84.50, 142.20];
/// Synthetic per-node coefficients of variation for the regression fixtures.
pub const SYNTHETIC_CV: [f64; 7] = [0.231, 0.188, 0.162, 0.175, 0.149, 0.121, 0.171];
