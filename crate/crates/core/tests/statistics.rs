mod oracles;

use elastisim::demand::fit_variability;
use elastisim::stats::{coefficient_of_variation, correlate, cv_from_moments, summarize, CorrelationMethod, SampleSet};
use oracles::{least_squares, pearson, spearman, BENCH_MILLICORES, BENCH_PODS, SYNTHETIC_CV};

#[test]
fn regression_on_bench_occupancy_matches_normal_equations() {
    let samples: Vec<(f64, f64)> = BENCH_PODS.iter().copied().zip(SYNTHETIC_CV).collect();
    let model = fit_variability(&samples).unwrap();
    let (intercept, slope) = least_squares(&BENCH_PODS, &SYNTHETIC_CV);
    assert!((model.cv_slope_per_pod - slope).abs() < 1e-9, "{} vs {slope}", model.cv_slope_per_pod);
    assert!((model.cv_intercept - intercept).abs() < 1e-9);
}

#[test]
fn regression_recovers_an_exact_line() {
    let samples: Vec<(f64, f64)> = BENCH_PODS.iter().map(|&p| (p, 0.05 + 0.0125 * p)).collect();
    let model = fit_variability(&samples).unwrap();
    assert!((model.cv_slope_per_pod - 0.0125).abs() < 1e-12);
    assert!((model.cv_intercept - 0.05).abs() < 1e-12);
}

#[test]
fn correlation_on_bench_occupancy_matches_power_sums() {
    for x in [&BENCH_PODS[..], &BENCH_MILLICORES[..]] {
        let p = correlate(x, &SYNTHETIC_CV, CorrelationMethod::Pearson).unwrap();
        let s = correlate(x, &SYNTHETIC_CV, CorrelationMethod::Spearman).unwrap();
        assert!((p - pearson(x, &SYNTHETIC_CV)).abs() < 1e-9);
        assert!((s - spearman(x, &SYNTHETIC_CV)).abs() < 1e-9);
    }
}

#[test]
fn correlation_bounds_and_affine_invariance() {
    let x = BENCH_PODS;
    let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let down: Vec<f64> = x.iter().map(|v| -v).collect();
    assert_eq!(correlate(&x, &up, CorrelationMethod::Pearson).unwrap(), 1.0);
    assert_eq!(correlate(&x, &down, CorrelationMethod::Pearson).unwrap(), -1.0);
    let moved: Vec<f64> = SYNTHETIC_CV.iter().map(|v| 40.0 * v - 3.0).collect();
    let a = correlate(&x, &SYNTHETIC_CV, CorrelationMethod::Pearson).unwrap();
    let b = correlate(&x, &moved, CorrelationMethod::Pearson).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn one_to_hundred() {
    let s = summarize(&SampleSet::from_values((1..=100).map(f64::from))).unwrap();
    assert_eq!(s.mean, 50.5);
    assert_eq!(s.median, 50.5);
    assert!((s.p95 - 95.05).abs() < 1e-9);
    // sqrt(n (n + 1) / 12) for consecutive integers with the n - 1 denominator
    assert!((s.sd - (100.0f64 * 101.0 / 12.0).sqrt()).abs() < 1e-9);
}

#[test]
fn published_cv() {
    assert!((cv_from_moments(52.58131, 8.965577).unwrap() - 0.17051).abs() < 1e-5);
    let scaled = SampleSet::from_values([40.0, 55.0, 61.0, 47.0].map(|v| v * 3.5));
    let base = SampleSet::from_values([40.0, 55.0, 61.0, 47.0]);
    let (a, b) = (coefficient_of_variation(&base).unwrap(), coefficient_of_variation(&scaled).unwrap());
    assert!((a - b).abs() < 1e-12);
}
