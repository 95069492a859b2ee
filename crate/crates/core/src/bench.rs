//! Execution-time benchmarks: repeated timed runs of the demand kernel,
//! either live on this host or drawn from the variability model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::demand::{burn_cpu, sample_actual_ms, CalibrationTable, VariabilityModel};
use crate::error::{Error, Result};
use crate::model::{NodeSpec, QosClass};
use crate::report::BenchmarkRow;

/// Shape of a benchmark: every demand level is run `executions` times, each
/// execution being `warmup` discarded iterations followed by `iterations`
/// measured ones.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub demands_ms: Vec<f64>,
    pub qos: QosClass,
    pub executions: u32,
    pub warmup: u32,
    pub iterations: u32,
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.demands_ms.is_empty() {
            return Err(Error::Domain("at least one demand level is required".into()));
        }
        if let Some(d) = self.demands_ms.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::Domain(format!("demand must be a positive number of milliseconds, got {d}")));
        }
        if self.executions == 0 || self.iterations == 0 {
            return Err(Error::Domain("executions and iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Rows per node, warm-up included.
    pub fn rows_per_node(&self) -> usize {
        self.demands_ms.len() * self.executions as usize * (self.warmup + self.iterations) as usize
    }

    fn collect(&self, node: &str, mut measure: impl FnMut(f64) -> f64) -> Vec<BenchmarkRow> {
        let mut rows = Vec::with_capacity(self.rows_per_node());
        for &demand_ms in &self.demands_ms {
            for execution in 1..=self.executions {
                for iteration in 1..=self.warmup + self.iterations {
                    rows.push(BenchmarkRow {
                        node: node.to_string(),
                        qos: self.qos,
                        demand_ms,
                        execution,
                        iteration,
                        measured_ms: measure(demand_ms),
                        warmup: iteration <= self.warmup,
                    });
                }
            }
        }
        rows
    }
}

/// Burns each demand on this host and records the wall time.
pub fn run_live(plan: &BenchPlan, table: &CalibrationTable, node: &str) -> Result<Vec<BenchmarkRow>> {
    plan.validate()?;
    Ok(plan.collect(node, |demand| burn_cpu(demand, table)))
}

/// Draws execution times for every node from `model`, using each node's
/// background pod count as its occupancy.
pub fn run_simulated(
    plan: &BenchPlan,
    nodes: &[NodeSpec],
    model: &VariabilityModel,
    seed: u64,
) -> Result<Vec<BenchmarkRow>> {
    plan.validate()?;
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(plan.rows_per_node() * nodes.len());
    for node in nodes {
        rows.extend(plan.collect(&node.name, |demand| {
            sample_actual_ms(demand, node.background_pods, plan.qos, model, &mut rng)
        }));
    }
    Ok(rows)
}
