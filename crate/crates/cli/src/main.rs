//! `elastisim` command-line front end.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 configuration or usage
//! error, 3 calibration error, 4 assessment error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use elastisim::bench::{run_live, run_simulated, BenchPlan};
use elastisim::config::ScenarioConfig;
use elastisim::demand::{calibrate_live, Accuracy, CalibrationTable};
use elastisim::model::QosClass;
use elastisim::report;
use elastisim::{assess, sim, Error};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CALIBRATION: u8 = 3;
const EXIT_ASSESSMENT: u8 = 4;

const CALIBRATION_FILE: &str = "calibration.csv";
const BENCHMARK_FILE: &str = "benchmark.csv";
const BENCHMARK_SUMMARY_FILE: &str = "benchmark-summary.csv";
const CORRELATION_FILE: &str = "correlation.json";

#[derive(Parser)]
#[command(name = "elastisim", version, about = "Simulate and assess elastic message-driven pipelines")]
struct Cli {
    /// Output directory; every file is written below it.
    #[arg(long, global = true, env = "ELASTISIM_OUT", default_value = "elastisim-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and export its report.
    Simulate {
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Calibrate the CPU busy-work kernel on this host.
    Calibrate {
        #[arg(long, value_enum, default_value_t = AccuracyArg::Medium)]
        accuracy: AccuracyArg,
        /// Longest calibration row in milliseconds.
        #[arg(long, default_value_t = 1100.0)]
        max_ms: f64,
    },
    /// Time the demand kernel for a list of demand levels.
    Bench {
        /// Demand levels in milliseconds.
        #[arg(long, value_delimiter = ',', default_value = "50,200,1000")]
        demand: Vec<f64>,
        #[arg(long, value_enum, default_value_t = QosArg::BestEffort)]
        qos: QosArg,
        /// Measured iterations per execution.
        #[arg(long, default_value_t = 5)]
        iterations: u32,
        /// Warm-up iterations per execution, exported but not summarized.
        #[arg(long, default_value_t = 5)]
        warmup: u32,
        #[arg(long, default_value_t = 1)]
        executions: u32,
        /// Calibration table; defaults to `calibration.csv` in the output directory.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Node label for live rows.
        #[arg(long, default_value = "local")]
        node: String,
        /// Draw times from the variability model for every node of --config
        /// instead of burning CPU.
        #[arg(long, requires = "config")]
        simulate: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Search the largest device count that meets the SLO.
    Assess {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        lo: Option<u32>,
        #[arg(long)]
        hi: Option<u32>,
        #[arg(long)]
        step: Option<u32>,
        /// Seeds per trial.
        #[arg(long)]
        seeds: Option<u32>,
        /// Simulations run in parallel.
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the simulated horizon (and workload duration) in seconds.
        #[arg(long)]
        horizon_s: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AccuracyArg {
    Low,
    Medium,
    High,
}

impl From<AccuracyArg> for Accuracy {
    fn from(a: AccuracyArg) -> Self {
        match a {
            AccuracyArg::Low => Accuracy::Low,
            AccuracyArg::Medium => Accuracy::Medium,
            AccuracyArg::High => Accuracy::High,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum QosArg {
    Guaranteed,
    Burstable,
    BestEffort,
}

impl From<QosArg> for QosClass {
    fn from(q: QosArg) -> Self {
        match q {
            QosArg::Guaranteed => QosClass::Guaranteed,
            QosArg::Burstable => QosClass::Burstable,
            QosArg::BestEffort => QosClass::BestEffort,
        }
    }
}

/// An error paired with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self::new(EXIT_FAILURE, error)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { config, seed } => cmd_simulate(&config, seed, &cli.out),
        Command::Calibrate { accuracy, max_ms } => cmd_calibrate(accuracy.into(), max_ms, &cli.out),
        Command::Bench {
            demand,
            qos,
            iterations,
            warmup,
            executions,
            calibration,
            node,
            simulate,
            config,
            seed,
        } => {
            let plan = BenchPlan {
                demands_ms: demand,
                qos: qos.into(),
                executions,
                warmup,
                iterations,
            };
            if simulate {
                cmd_bench_simulated(&plan, config.as_deref().expect("clap enforces --config"), seed, &cli.out)
            } else {
                cmd_bench_live(&plan, calibration, &node, &cli.out)
            }
        }
        Command::Assess {
            configs,
            lo,
            hi,
            step,
            seeds,
            jobs,
            horizon_s,
        } => cmd_assess(&configs, AssessOverrides { lo, hi, step, seeds, horizon_s }, jobs, &cli.out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::load(path).map_err(|e| Failure::new(EXIT_CONFIG, anyhow!(e).context(path.display().to_string())))
}

fn config_error(error: Error) -> Failure {
    Failure::new(EXIT_CONFIG, error)
}

fn cmd_simulate(config_path: &Path, seed: Option<u64>, out: &Path) -> CmdResult {
    let mut config = load_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let report = sim::run(&config).map_err(|e| match e {
        Error::Config(_) => config_error(e),
        other => Failure::from(anyhow!(other).context("simulation failed")),
    })?;
    report::write_run_report(&report, out).context("writing run report")?;
    let k = report.counts;
    println!(
        "{}: generated {} completed {} in-flight {} dropped {}",
        if config.name.is_empty() { "run" } else { &config.name },
        k.generated,
        k.completed,
        k.in_flight,
        k.dropped
    );
    if let Some(stats) = report::ResponseStats::of(&report.response_times_ms()) {
        println!(
            "response ms: mean {} median {} p95 {} p99 {}",
            report::format_sig(stats.mean),
            report::format_sig(stats.median),
            report::format_sig(stats.p95),
            report::format_sig(stats.p99)
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn cmd_calibrate(accuracy: Accuracy, max_ms: f64, out: &Path) -> CmdResult {
    if let Some(load) = load_average() {
        let cpus = std::thread::available_parallelism().map_or(1, |n| n.get()) as f64;
        if load > 0.5 * cpus {
            eprintln!("warning: load average {load:.2} on {cpus} CPUs; calibration may be unstable");
        }
    }
    let table = calibrate_live(accuracy, max_ms).map_err(|e| Failure::new(EXIT_CALIBRATION, e))?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(CALIBRATION_FILE);
    table.write_csv(&path).context("writing calibration table")?;
    println!(
        "{} rows, {:.6e} ms per iteration, ratio spread {}",
        table.rows().len(),
        table.fitted_rate(),
        table
            .ratio_spread()
            .map_or_else(|| "n/a".to_string(), |s| format!("{:.2}%", s * 100.0))
    );
    println!("calibration written to {}", path.display());
    Ok(())
}

fn load_average() -> Option<f64> {
    std::fs::read_to_string("/proc/loadavg")
        .ok()?
        .split_whitespace()
        .next()?
        .parse()
        .ok()
}

fn cmd_bench_live(plan: &BenchPlan, calibration: Option<PathBuf>, node: &str, out: &Path) -> CmdResult {
    plan.validate().map_err(config_error)?;
    let path = calibration.unwrap_or_else(|| out.join(CALIBRATION_FILE));
    if !path.exists() {
        return Err(Failure::new(
            EXIT_CALIBRATION,
            anyhow!("calibration table {} not found; run `elastisim calibrate` first", path.display()),
        ));
    }
    let table = CalibrationTable::read_csv(&path, Accuracy::Medium).map_err(|e| Failure::new(EXIT_CALIBRATION, e))?;
    let rows = run_live(plan, &table, node).map_err(config_error)?;
    write_bench_outputs(&rows, out)?;
    Ok(())
}

fn cmd_bench_simulated(plan: &BenchPlan, config_path: &Path, seed: Option<u64>, out: &Path) -> CmdResult {
    plan.validate().map_err(config_error)?;
    let config = load_config(config_path)?;
    let model = config.variability_model().map_err(config_error)?;
    let rows = run_simulated(plan, &config.topology.nodes, &model, seed.unwrap_or(config.seed)).map_err(config_error)?;
    let cells = write_bench_outputs(&rows, out)?;
    match report::occupancy_correlation(&cells, &config.topology.nodes) {
        Ok(corr) => {
            let path = out.join(CORRELATION_FILE);
            report::write_json_rounded(&corr, &path).context("writing correlation")?;
            println!(
                "pods vs cv: pearson {} spearman {}; millicores vs cv: pearson {} spearman {}",
                report::format_sig(corr.pods_pearson),
                report::format_sig(corr.pods_spearman),
                report::format_sig(corr.millicores_pearson),
                report::format_sig(corr.millicores_spearman)
            );
        }
        Err(e) => eprintln!("note: correlation skipped: {e}"),
    }
    Ok(())
}

fn write_bench_outputs(rows: &[report::BenchmarkRow], out: &Path) -> Result<Vec<report::BenchmarkCell>, Failure> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(BENCHMARK_FILE);
    report::write_benchmark(rows, &path).context("writing benchmark rows")?;
    let cells = report::summarize_benchmark(rows).map_err(|e| Failure::from(anyhow!(e)))?;
    report::write_benchmark_summary(&cells, &out.join(BENCHMARK_SUMMARY_FILE)).context("writing benchmark summary")?;
    println!("node\tqos\tdemand_ms\tmean\tmedian\tp95\tsd\tcv");
    for c in &cells {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.node,
            c.qos,
            report::format_sig(c.demand_ms),
            report::format_sig(c.mean),
            report::format_sig(c.median),
            report::format_sig(c.p95),
            report::format_sig(c.sd),
            report::format_sig(c.cv)
        );
    }
    println!(
        "{} rows ({} measured) written to {}",
        rows.len(),
        rows.iter().filter(|r| !r.warmup).count(),
        path.display()
    );
    Ok(cells)
}

struct AssessOverrides {
    lo: Option<u32>,
    hi: Option<u32>,
    step: Option<u32>,
    seeds: Option<u32>,
    horizon_s: Option<f64>,
}

impl AssessOverrides {
    fn apply(&self, config: &mut ScenarioConfig) -> Result<(), Failure> {
        let a = &mut config.assessment;
        a.lo = self.lo.unwrap_or(a.lo);
        a.hi = self.hi.unwrap_or(a.hi);
        a.step = self.step.unwrap_or(a.step);
        a.seeds = self.seeds.unwrap_or(a.seeds);
        if a.lo >= a.hi {
            return Err(Failure::new(
                EXIT_CONFIG,
                anyhow!("--lo ({}) must be below --hi ({})", a.lo, a.hi),
            ));
        }
        if a.step == 0 || a.seeds == 0 {
            return Err(Failure::new(EXIT_CONFIG, anyhow!("--step and --seeds must be at least 1")));
        }
        if let Some(h) = self.horizon_s {
            config.horizon_s = h;
            let mut profile = config.load_profile().map_err(config_error)?;
            profile.duration_s = h;
            config.workload = elastisim::config::WorkloadRef::Inline(profile);
        }
        config.validate().map_err(config_error)
    }
}

fn cmd_assess(paths: &[PathBuf], overrides: AssessOverrides, jobs: Option<usize>, out: &Path) -> CmdResult {
    let mut configs = Vec::with_capacity(paths.len());
    for path in paths {
        let mut config = load_config(path)?;
        overrides.apply(&mut config)?;
        let name = if config.name.is_empty() {
            path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
        } else {
            config.name.clone()
        };
        configs.push((name, config));
    }
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let named: Vec<(&str, &ScenarioConfig)> = configs.iter().map(|(n, c)| (n.as_str(), c)).collect();
    let results = assess::assess_configurations(&named, jobs).map_err(|e| Failure::new(EXIT_ASSESSMENT, e))?;
    let written = report::write_capacity(&results, out).context("writing capacity results")?;
    for r in &results {
        let hit = &r.result.bounds_hit;
        let note = if hit.lo_fail {
            " (fails at the lower bound)"
        } else if hit.hi_pass {
            " (passes at the upper bound)"
        } else {
            ""
        };
        println!(
            "{}: {} devices meet p{} <= {} ms after {} trials{note}",
            r.name,
            r.result.max_devices,
            report::format_sig(r.slo.percentile),
            report::format_sig(r.slo.threshold_ms),
            r.result.trials.len()
        );
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
