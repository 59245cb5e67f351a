//! Small numeric helpers for aggregating trial metrics.

/// Arithmetic mean (0 for an empty slice).
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean: sample standard deviation over `√n`
/// (0 when fewer than two samples).
pub fn stderr(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// 95th-percentile by the nearest-rank rule: the `⌈0.95·n⌉`-th smallest
/// sample (0 for an empty slice).
pub fn p95(xs: &[u64]) -> u64 {
    if xs.is_empty() {
        return 0;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_unstable();
    let rank = (0.95 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Iterations of `x ↦ min(2·log2 x + 4, x - 1)` needed to drive `x`
/// to 1 or below. Grows like an iterated logarithm and bounds the
/// expected deepest cascade round reached under `x`-way contention.
pub fn g_star(x: f64) -> u32 {
    let mut x = x;
    let mut count = 0;
    while x > 1.0 {
        x = (2.0 * x.log2() + 4.0).min(x - 1.0);
        count += 1;
        assert!(count < 10_000, "g_star diverged");
    }
    count
}
