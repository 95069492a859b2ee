//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion fails. The live calibration check depends on
//! the host being quiet; its failure is reported but only fatal when
//! `ELASTISIM_STRICT_LIVE=1` is set.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use elastisim::assess::{assess_configurations, find_capacity, Trial};
use elastisim::autoscale::{apply_actions, hpa_desired_replicas, node_policy_step, NodePolicy};
use elastisim::cfs::allocate_period;
use elastisim::cluster::{ClusterState, DeploymentTemplate};
use elastisim::config::ScenarioConfig;
use elastisim::demand::{
    burn_cpu, calibrate_live, sample_actual_ms, Accuracy, VariabilityModel, PAPER_BWCLOUD_REFERENCE_PODS,
    WARMUP_RUNS,
};
use elastisim::model::{millicores_to_fraction, NodeSpec, QosClass, ResourceSpec};
use elastisim::stats::{correlate, cv_from_moments, percentile, summarize, CorrelationMethod, SampleSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A named check and whether its failure fails the suite.
type Criterion = (&'static str, fn() -> Outcome, bool);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn millicore_arithmetic() -> Outcome {
    let pct = millicores_to_fraction(207.15, 4).unwrap() * 100.0;
    outcome((pct - 5.18).abs() <= 0.01, format!("207.15 mc on 4 vCPU = {pct:.5}% (expected 5.18 ± 0.01)"))
}

fn hpa_formula() -> Outcome {
    let tolerance = 0.1;
    let mut cases = 0;
    let mut mismatches = Vec::new();
    for current in 1..=10u32 {
        for tenths in 1..=20u32 {
            let want = if tenths.abs_diff(10) <= 1 {
                current
            } else {
                (current * tenths).div_ceil(10).clamp(1, 100)
            };
            let got = hpa_desired_replicas(current, f64::from(tenths) / 10.0, 1.0, tolerance, 1, 100).unwrap();
            cases += 1;
            if got != want {
                mismatches.push(format!("current {current} ratio {}: {got} != {want}", f64::from(tenths) / 10.0));
            }
        }
    }
    outcome(
        cases == 200 && mismatches.is_empty(),
        format!("{cases} grid cases, {} mismatches {:?}", mismatches.len(), mismatches.first()),
    )
}

fn lockstep_cluster() -> ClusterState {
    let mut s = ClusterState::new(vec![NodeSpec::new("worker-1", 4)], NodeSpec::new("worker", 4)).unwrap();
    for dep in ["device-comm", "data-provider", "data-processing"] {
        s.add_deployment(
            dep,
            DeploymentTemplate {
                resources: ResourceSpec::burstable(500),
                dedicated_cpu_eligible: false,
            },
        );
        s.scale_out(dep).unwrap();
    }
    s
}

fn node_policy_lockstep() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut state = lockstep_cluster();
    let mut scaled = 0;
    for step in 0..10_000u32 {
        let lower = rng.random_range(0.05..0.5);
        let upper = rng.random_range(lower + 0.05..0.95);
        let policy = NodePolicy::new(lower, upper);
        let util = rng.random_range(0.0..1.0);
        let actions = node_policy_step(&state, util, &policy);
        scaled += usize::from(!actions.is_empty());
        let events = apply_actions(&mut state, &actions, "node-based", u64::from(step) * 1_000_000);
        if let Some(e) = events.iter().find(|e| e.error.is_some()) {
            return outcome(false, format!("step {step}: {:?}", e.error));
        }
        let nodes = state.app_node_count();
        let bad = state.deployment_names().into_iter().find(|d| state.replicas(d) != nodes);
        if bad.is_some() || !(1..=4).contains(&nodes) {
            return outcome(false, format!("step {step}: nodes {nodes}, mismatched deployment {bad:?}"));
        }
    }
    outcome(true, format!("10000 steps ({scaled} with scaling), nodes == replicas and within [1, 4] throughout"))
}

fn cfs_oracle() -> Outcome {
    const SHARES: [u64; 3] = [1024, 2048, 3072];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0usize;
    for shape in oracles::root_shapes(4, 1) {
        let weighted = shape.weighted_nodes();
        let combos = 3usize.pow(weighted as u32);
        // all share combinations up to 243, a seeded subset beyond
        let picks: Vec<usize> = if combos <= 243 {
            (0..combos).collect()
        } else {
            (0..243).map(|_| rng.random_range(0..combos)).collect()
        };
        for code in picks {
            let shares: Vec<u64> = (0..weighted).map(|i| SHARES[code / 3usize.pow(i as u32) % 3]).collect();
            for _ in 0..3 {
                let demands: Vec<u64> = (0..shape.leaves()).map(|_| rng.random_range(0..=10)).collect();
                let tree = oracles::build(&shape, &mut shares.iter().copied(), &mut demands.iter().copied());
                for capacity in 0..=10 {
                    let got = allocate_period(&tree, capacity).unwrap();
                    for (leaf, want) in oracles::oracle_allocate(&tree, capacity) {
                        if got.grant(&leaf) != want {
                            return outcome(
                                false,
                                format!("leaf {leaf}: {} != {want} at capacity {capacity} in {tree:?}", got.grant(&leaf)),
                            );
                        }
                    }
                    checked += 1;
                }
            }
        }
    }
    outcome(true, format!("{checked} allocations over 54 tree shapes equal the progressive-filling oracle"))
}

fn random_hierarchies() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..1000 {
        let period = 100_000;
        let tree = oracles::random_hierarchy(&mut rng, 8, period);
        let capacity = period * rng.random_range(1..=4);
        let result = allocate_period(&tree, capacity).unwrap();
        let problems = oracles::allocation_violations(&tree, capacity, &|leaf| result.grant(leaf));
        if !problems.is_empty() {
            return outcome(false, format!("hierarchy {i}: {problems:?}"));
        }
    }
    outcome(true, "1000 hierarchies: conservation, work conservation, quota dominance, proportionality ±1 µs")
}

fn demand_anchors() -> Outcome {
    let model = VariabilityModel::paper_bwcloud();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let nominal = 50.0;
    let mut samples: Vec<f64> = (0..100_000)
        .map(|_| sample_actual_ms(nominal, PAPER_BWCLOUD_REFERENCE_PODS, QosClass::BestEffort, &model, &mut rng))
        .collect();
    let p95 = percentile(&mut samples, 95.0).unwrap();
    let mut ratios: Vec<f64> = samples.iter().map(|s| s / nominal).collect();
    let p25 = percentile(&mut ratios, 25.0).unwrap();
    let summary = summarize(&SampleSet::from_values(samples)).unwrap();
    let pass = (p95 / 66.57 - 1.0).abs() <= 0.10 && (p25 - 1.0).abs() <= 0.02;
    outcome(
        pass,
        format!(
            "p95 {p95:.3} (66.57 ± 10%), P25 ratio {p25:.4} (1 ± 2%), mean {:.3}, sd {:.3}",
            summary.mean, summary.sd
        ),
    )
}

fn live_calibration() -> Outcome {
    let table = match calibrate_live(Accuracy::Medium, 1100.0) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("calibration failed: {e}")),
    };
    let spread = table.ratio_spread().unwrap_or(f64::INFINITY);
    for _ in 0..WARMUP_RUNS {
        burn_cpu(50.0, &table);
    }
    let runs: Vec<f64> = (0..25).map(|_| burn_cpu(50.0, &table)).collect();
    let within = runs.iter().filter(|t| (45.0..=65.0).contains(*t)).count();
    let (lo, hi) = runs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), t| (lo.min(*t), hi.max(*t)));
    outcome(
        within * 100 >= 80 * runs.len() && spread <= 0.10,
        format!(
            "{within}/25 burns of 50 ms in [45, 65] (range {lo:.2}..{hi:.2} ms), rate spread {:.2}% (≤ 10%)",
            spread * 100.0
        ),
    )
}

fn binary_search() -> Outcome {
    let runner = |devices: u32| -> elastisim::Result<Trial> {
        Ok(Trial {
            devices,
            p95_ms: f64::from(devices) / 3.0,
            pass: devices <= 3000,
            seeds: vec![],
        })
    };
    let result = find_capacity(100, 8000, 100, runner).unwrap();
    let linear = (100..=8000).step_by(100).filter(|&d| d <= 3000).max().unwrap_or(0);
    let trials = result.trials.len();
    outcome(
        result.max_devices == 3000 && result.max_devices == linear && trials <= 9,
        format!("capacity {} (linear scan {linear}) after {trials} trials (≤ 9)", result.max_devices),
    )
}

fn scalability_shape() -> Outcome {
    let load = |name: &str| ScenarioConfig::load(&configs_dir().join(name)).unwrap();
    let initial = load("paper-initial.json");
    let scaled = load("paper-scaled.json");
    if initial.workload != scaled.workload {
        return outcome(false, "configurations use different workload shapes");
    }
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let results = match assess_configurations(&[("initial", &initial), ("scaled", &scaled)], jobs) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("assessment failed: {e}")),
    };
    let (a, b) = (&results[0].result, &results[1].result);
    let crosses = |r: &elastisim::assess::CapacityResult| {
        r.trials.iter().any(|t| t.pass) && r.trials.iter().any(|t| !t.pass)
    };
    let describe = |r: &elastisim::assess::CapacityResult| {
        let last_pass = r.trials.iter().filter(|t| t.pass).max_by_key(|t| t.devices);
        let first_fail = r.trials.iter().filter(|t| !t.pass).min_by_key(|t| t.devices);
        format!(
            "{} devices (p95 {:.0} ms passes, {} devices p95 {:.0} ms fails)",
            r.max_devices,
            last_pass.map_or(0.0, |t| t.p95_ms),
            first_fail.map_or(0, |t| t.devices),
            first_fail.map_or(0.0, |t| t.p95_ms)
        )
    };
    outcome(
        b.max_devices >= a.max_devices && crosses(a) && crosses(b),
        format!("initial {}; scaled {}", describe(a), describe(b)),
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_elastisim");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let status = Command::new(bin)
            .arg("--out")
            .arg(dir.path())
            .args(["simulate", "--seed", "7"])
            .arg(configs_dir().join("paper-node-based.json"))
            .output()
            .expect("run elastisim");
        if !status.status.success() {
            return outcome(false, format!("simulate exited with {}", status.status));
        }
    }
    let files = |dir: &Path| {
        let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect();
        v.sort();
        v
    };
    let (a, b) = (files(dirs[0].path()), files(dirs[1].path()));
    let bytes: usize = a.iter().map(|(_, c)| c.len()).sum();
    outcome(
        a.len() == 4 && a == b,
        format!("{} files, {bytes} bytes, identical: {}", a.len(), a == b),
    )
}

fn statistics() -> Outcome {
    let s = summarize(&SampleSet::from_values((1..=100).map(f64::from))).unwrap();
    let cv = cv_from_moments(52.58131, 8.965577).unwrap();
    let x: Vec<f64> = (1..=20).map(f64::from).collect();
    let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let down: Vec<f64> = x.iter().map(|v| -v).collect();
    let r_up = correlate(&x, &up, CorrelationMethod::Pearson).unwrap();
    let r_down = correlate(&x, &down, CorrelationMethod::Pearson).unwrap();
    let pass = s.mean == 50.5
        && s.median == 50.5
        && (s.p95 - 95.05).abs() < 1e-9
        && (s.sd - 29.011).abs() < 5e-4
        && (cv - 0.17051).abs() <= 1e-5
        && r_up == 1.0
        && r_down == -1.0;
    outcome(
        pass,
        format!(
            "{{1..100}} sd {:.4}, p95 {:.2}; CV {cv:.6}; pearson {r_up} / {r_down}",
            s.sd, s.p95
        ),
    )
}

fn main() {
    let strict_live = std::env::var("ELASTISIM_STRICT_LIVE").is_ok_and(|v| v == "1");
    let criteria: [Criterion; 11] = [
        ("millicore arithmetic", millicore_arithmetic, true),
        ("HPA formula grid", hpa_formula, true),
        ("node-based lockstep", node_policy_lockstep, true),
        ("CFS oracle equivalence", cfs_oracle, true),
        ("quota/shares properties", random_hierarchies, true),
        ("demand-model anchors", demand_anchors, true),
        ("live calibration (environment-sensitive)", live_calibration, strict_live),
        ("binary-search capacity", binary_search, true),
        ("end-to-end scalability shape", scalability_shape, true),
        ("determinism", determinism, true),
        ("statistics", statistics, true),
    ];
    let mut fatal = 0;
    for (name, check, required) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        let note = if !result.pass && !required { " [not fatal]" } else { "" };
        println!("{verdict} {name}: {} ({secs:.1} s){note}", result.detail);
        if !result.pass && required {
            fatal += 1;
        }
    }
    if fatal > 0 {
        eprintln!("{fatal} acceptance criteria failed");
        std::process::exit(1);
    }
}
