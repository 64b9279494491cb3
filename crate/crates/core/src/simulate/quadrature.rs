//! Adaptive Gauss–Kronrod (7/15) quadrature with a global error heap.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("tolerance {tolerance:e} not reached after {evaluations} evaluations (error estimate {estimate:e})")]
    Accuracy {
        tolerance: f64,
        estimate: f64,
        evaluations: usize,
    },
    #[error("integrand is not finite at x = {0}")]
    NonFinite(f64),
    #[error("invalid interval [{0}, {1}]")]
    Interval(f64, f64),
    #[error("variance must be non-negative and finite, got {0}")]
    Variance(f64),
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 2000;

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<Segment, QuadratureError> {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite(x))
        }
    };
    let fc = eval(centre)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = half * XGK[k];
        let pair = eval(centre - dx)? + eval(centre + dx)?;
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    Ok(Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    })
}

/// `∫_lo^hi f` to absolute tolerance `abs_tol`. Infinite bounds are handled by
/// mapping the real line onto `(-1, 1)` with `x = u / (1 - u²)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    abs_tol: f64,
) -> Result<f64, QuadratureError> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(QuadratureError::Interval(lo, hi));
    }
    if lo == hi {
        return Ok(0.0);
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => integrate_finite(&f, lo, hi, abs_tol),
        (false, false) => {
            let g = |u: f64| {
                let d = 1.0 - u * u;
                f(u / d) * (1.0 + u * u) / (d * d)
            };
            integrate_finite(&g, -1.0, 1.0, abs_tol)
        }
        (true, false) => {
            // x = lo + t / (1 - t), t ∈ (0, 1)
            let g = |t: f64| {
                let d = 1.0 - t;
                f(lo + t / d) / (d * d)
            };
            integrate_finite(&g, 0.0, 1.0, abs_tol)
        }
        (false, true) => {
            let g = |t: f64| {
                let d = 1.0 - t;
                f(hi - t / d) / (d * d)
            };
            integrate_finite(&g, 0.0, 1.0, abs_tol)
        }
    }
}

fn integrate_finite<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    abs_tol: f64,
) -> Result<f64, QuadratureError> {
    let mut heap = BinaryHeap::new();
    let first = gk15(f, lo, hi)?;
    let mut value = first.value;
    let mut error = first.error;
    heap.push(first);
    let mut segments = 1;
    while error > abs_tol {
        if segments >= MAX_SEGMENTS {
            return Err(QuadratureError::Accuracy {
                tolerance: abs_tol,
                estimate: error,
                evaluations: segments * 15,
            });
        }
        let worst = heap.pop().expect("heap holds every live segment");
        let mid = 0.5 * (worst.lo + worst.hi);
        let left = gk15(f, worst.lo, mid)?;
        let right = gk15(f, mid, worst.hi)?;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        segments += 1;
    }
    // resum to shed the drift from incremental updates
    let total: f64 = heap.iter().map(|s| s.value).sum();
    debug_assert!((total - value).abs() <= 1e-9 * (1.0 + total.abs()));
    Ok(total)
}

/// `E[exp(-x²/2)]` for `x ~ Normal(mu, var)`, by quadrature against the
/// normal density (absolute tolerance `1e-10`).
pub fn quadrature_gaussian_exp(mu: f64, var: f64) -> Result<f64, QuadratureError> {
    if !(var >= 0.0 && var.is_finite()) {
        return Err(QuadratureError::Variance(var));
    }
    if var == 0.0 {
        return Ok((-0.5 * mu * mu).exp());
    }
    let sd = var.sqrt();
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let integrand = |t: f64| {
        let x = mu + sd * t;
        norm * (-0.5 * t * t - 0.5 * x * x).exp()
    };
    integrate(integrand, f64::NEG_INFINITY, f64::INFINITY, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gaussian_exp_identity;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0, 1e-13).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0) + 3.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn infinite_ranges() {
        let pi = std::f64::consts::PI;
        let v = integrate(|x| (-x * x).exp(), f64::NEG_INFINITY, f64::INFINITY, 1e-12).unwrap();
        assert!((v - pi.sqrt()).abs() < 1e-11);
        let v = integrate(|x| (-x).exp(), 0.0, f64::INFINITY, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
        let v = integrate(|x| 1.0 / (1.0 + x * x), f64::NEG_INFINITY, 0.0, 1e-11).unwrap();
        assert!((v - pi / 2.0).abs() < 1e-10);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        let v = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-9).unwrap();
        assert!((v - 2.0).abs() < 1e-8);
    }

    #[test]
    fn unreachable_tolerance_is_reported() {
        let err = integrate(|x| (1.0 / x).sin() / x, 1e-8, 1.0, 1e-15).unwrap_err();
        assert!(matches!(err, QuadratureError::Accuracy { .. }));
    }

    #[test]
    fn gaussian_exp_point_masses() {
        assert_eq!(quadrature_gaussian_exp(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(quadrature_gaussian_exp(1.0, 0.0).unwrap(), (-0.5f64).exp());
        assert!(quadrature_gaussian_exp(0.0, -1.0).is_err());
    }

    #[test]
    fn gaussian_exp_matches_closed_form() {
        let v = quadrature_gaussian_exp(2.0, 3.0).unwrap();
        assert!((v - gaussian_exp_identity(2.0, 3.0)).abs() < 1e-8);
        for &(mu, var) in &[(0.0, 0.01), (-4.0, 0.5), (7.0, 25.0), (0.3, 100.0), (10.0, 1e-4)] {
            let v = quadrature_gaussian_exp(mu, var).unwrap();
            let e = gaussian_exp_identity(mu, var);
            assert!((v - e).abs() < 1e-9, "mu={mu} var={var}: {v} vs {e}");
        }
    }
}
