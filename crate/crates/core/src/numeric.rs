//! Small numeric helpers shared by the estimators.

/// Pairwise (cascade) summation. The split points depend only on the
/// slice length, so the result is reproducible for a fixed input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Ordinary least-squares slope of `ys` against `xs`.
/// Returns `None` with fewer than two points or degenerate abscissae.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// True if `x` is `base * 2^k` for some integer `k` (relative tolerance 1e-9).
pub fn is_dyadic_multiple(x: f64, base: f64) -> Option<i32> {
    if !(x > 0.0 && base > 0.0) {
        return None;
    }
    let k = (x / base).log2().round();
    let back = base * k.exp2();
    if ((back - x) / x).abs() < 1e-9 {
        Some(k as i32)
    } else {
        None
    }
}
