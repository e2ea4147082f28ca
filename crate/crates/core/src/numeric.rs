//! Small numerical helpers shared by the engine and the closed forms.

/// Modified Bessel function of the first kind, order zero.
///
/// Even power series `sum (x/2)^(2k) / (k!)^2`, stopped once the term ratio
/// drops below 1e-16. Arguments in this crate are well below 1, where a
/// handful of terms suffice; the series converges for every finite `x`.
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term <= 1e-16 * sum {
            return sum;
        }
        k += 1.0;
    }
}

/// Pairwise (tree) summation. The reduction order depends only on the
/// length of the slice, so results are bit-identical however the inputs
/// were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

/// Cosines of `n` equally spaced nodes on `[0, 2pi)`. The trapezoid rule on
/// a periodic integrand reduces to the plain mean over these nodes.
pub fn periodic_cos_nodes(n: usize) -> Vec<f64> {
    let step = std::f64::consts::TAU / n as f64;
    (0..n).map(|k| (k as f64 * step).cos()).collect()
}

/// Trapezoid rule for a periodic integrand that depends on `phi` only
/// through `cos(phi)`: nodes `k` and `n - k` coincide, leaving `n/2 + 1`
/// distinct `(cos, weight)` pairs with weights summing to 1. `n` must be even.
pub fn periodic_cos_rule(n: usize) -> Vec<(f64, f64)> {
    debug_assert!(n >= 2 && n % 2 == 0);
    let half = n / 2;
    let step = std::f64::consts::TAU / n as f64;
    let w = 1.0 / n as f64;
    (0..=half)
        .map(|k| {
            let weight = if k == 0 || k == half { w } else { 2.0 * w };
            ((k as f64 * step).cos(), weight)
        })
        .collect()
}
