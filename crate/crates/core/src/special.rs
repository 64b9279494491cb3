//! Log-gamma helpers that stay accurate when the arguments are huge.
//!
//! Moment matching near the binomial or Poisson limit produces shape
//! parameters around `1e10`, where `ln Γ(x + y) - ln Γ(x)` computed as a plain
//! difference loses most of its digits.

use statrs::function::gamma::ln_gamma;

const STIRLING_THRESHOLD: f64 = 30.0;

/// `ln Γ(x) - (x - 1/2) ln x + x - ln √(2π)` for `x ≥ 30`.
fn stirling_correction(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `ln Γ(x + y) - ln Γ(x)` for `x > 0`, `y ≥ 0`.
pub fn ln_gamma_diff(x: f64, y: f64) -> f64 {
    debug_assert!(x > 0.0 && y >= 0.0);
    if y == 0.0 {
        return 0.0;
    }
    if x < STIRLING_THRESHOLD {
        return ln_gamma(x + y) - ln_gamma(x);
    }
    let z = x + y;
    // (z - 1/2) ln z - (x - 1/2) ln x - y, rearranged around ln(1 + y/x)
    (x - 0.5) * (y / x).ln_1p() + y * z.ln() - y + stirling_correction(z)
        - stirling_correction(x)
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `ln k!`.
pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}
