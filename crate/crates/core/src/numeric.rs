//! Small numerical helpers shared across modules.

/// Local maxima above `rel_threshold * max(values)`, at least `min_separation`
/// samples apart. Taller peaks win ties; the result is sorted by index.
pub fn find_peaks(values: &[f64], rel_threshold: f64, min_separation: usize) -> Vec<usize> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let global = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(global > 0.0) {
        return Vec::new();
    }
    let floor = rel_threshold * global;
    let mut candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| values[i] >= floor && values[i] >= values[i - 1] && values[i] > values[i + 1])
        .collect();
    candidates.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) >= min_separation) {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();
    accepted
}

/// Default peak rule: 10% of the global maximum, three samples apart.
pub fn default_peaks(values: &[f64]) -> Vec<usize> {
    find_peaks(values, 0.1, 3)
}

/// Vertex of the parabola through three equally spaced samples, as an
/// offset in units of the spacing relative to the middle sample.
pub fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        0.5 * (left - right) / denom
    }
}

/// Richardson extrapolation for a sequence computed at step sizes `h, h/2, h/4, ...`
/// with an error expansion in powers `orders[0], orders[1], ...` of `h`.
/// Returns the extrapolated limit using as many levels as the data allow.
pub fn richardson(values: &[f64], orders: &[i32]) -> f64 {
    let mut table: Vec<f64> = values.to_vec();
    for &p in orders {
        if table.len() < 2 {
            break;
        }
        let factor = 2f64.powi(p);
        table = table
            .windows(2)
            .map(|w| (factor * w[1] - w[0]) / (factor - 1.0))
            .collect();
    }
    *table.last().expect("richardson needs at least one value")
}

/// Observed convergence orders `log2(e_k / e_{k+1})` for errors at halving steps.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .map(|w| (w[0].abs() / w[1].abs()).log2())
        .collect()
}

/// Composite Simpson rule with `2 * half_panels` subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, half_panels: usize) -> f64 {
    let n = 2 * half_panels.max(1);
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}
