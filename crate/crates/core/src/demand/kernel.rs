use std::hint::black_box;
use std::time::Instant;

/// Fibonacci-style accumulation. Each step depends on the previous two, so
/// the loop cannot be vectorised or folded away.
pub fn busy_work(iterations: u64) -> u64 {
    let (mut a, mut b) = (black_box(0u64), black_box(1u64));
    for i in 0..iterations {
        let next = a.wrapping_add(b) ^ i;
        a = b;
        b = next;
    }
    black_box(b)
}

/// Runs the kernel and returns elapsed wall time in milliseconds.
pub fn timed_busy_work(iterations: u64) -> f64 {
    let start = Instant::now();
    black_box(busy_work(iterations));
    start.elapsed().as_secs_f64() * 1000.0
}
