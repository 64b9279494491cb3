//! Moments of the Gaussian connectivity kernel
//! `λ(x, y) = θ exp(-|x - y|² / 2)` between nodes drawn from Gaussian clusters.
//!
//! Every moment is assembled in log-space and exponentiated once. The `ln_*`
//! variants are exposed for callers that need the logarithm directly.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("centre dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("propensity must lie in [0, 1], got {0}")]
    Propensity(f64),
    #[error("latent dimension must be at least 1")]
    ZeroDimension,
    #[error("cluster variance must be finite and non-negative, got {0}")]
    Variance(f64),
    #[error("separation must be finite and non-negative, got {0}")]
    Separation(f64),
}

/// Propensity `theta` and latent dimension `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    theta: f64,
    q: usize,
}

impl KernelParams {
    pub fn new(theta: f64, q: usize) -> Result<Self, KernelError> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(KernelError::Propensity(theta));
        }
        if q == 0 {
            return Err(KernelError::ZeroDimension);
        }
        Ok(Self { theta, q })
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    fn half_q(&self) -> f64 {
        self.q as f64 / 2.0
    }
}

/// Which endpoint of a pair of edges is the shared node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SharedSide {
    /// `E[λ_ij λ_il]`: node `i` in group `a` is shared, `j != l` are in group `b`.
    A,
    /// `E[λ_ij λ_kj]`: node `j` in group `b` is shared, `i != k` are in group `a`.
    B,
}

/// Two clusters `a` and `b`, reduced to what the kernel moments depend on:
/// the squared distance between centres and the two variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterPair {
    sq_dist: f64,
    var_a: f64,
    var_b: f64,
}

fn check_variance(v: f64) -> Result<f64, KernelError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(KernelError::Variance(v))
    }
}

impl ClusterPair {
    pub fn from_centres(
        mu_a: &[f64],
        mu_b: &[f64],
        var_a: f64,
        var_b: f64,
    ) -> Result<Self, KernelError> {
        if mu_a.len() != mu_b.len() {
            return Err(KernelError::DimensionMismatch {
                left: mu_a.len(),
                right: mu_b.len(),
            });
        }
        let sq_dist = mu_a
            .iter()
            .zip(mu_b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(Self {
            sq_dist,
            var_a: check_variance(var_a)?,
            var_b: check_variance(var_b)?,
        })
    }

    /// Pair separated by `delta = |mu_a - mu_b|`.
    pub fn from_separation(delta: f64, var_a: f64, var_b: f64) -> Result<Self, KernelError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(KernelError::Separation(delta));
        }
        Ok(Self {
            sq_dist: delta * delta,
            var_a: check_variance(var_a)?,
            var_b: check_variance(var_b)?,
        })
    }

    /// Same pair with the roles of `a` and `b` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            sq_dist: self.sq_dist,
            var_a: self.var_b,
            var_b: self.var_a,
        }
    }

    #[inline]
    pub fn sq_dist(&self) -> f64 {
        self.sq_dist
    }

    #[inline]
    pub fn var_a(&self) -> f64 {
        self.var_a
    }

    #[inline]
    pub fn var_b(&self) -> f64 {
        self.var_b
    }
}

/// `E[λ]`, `E[λ²]` and the two shared-node cross moments for one pair of groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    pub mean: f64,
    pub second: f64,
    pub cross_common_a: f64,
    pub cross_common_b: f64,
}

impl KernelMoments {
    pub fn new(pair: &ClusterPair, kp: &KernelParams) -> Self {
        Self {
            mean: expected_kernel(pair, kp),
            second: kernel_second_moment(pair, kp),
            cross_common_a: kernel_cross_moment(pair, kp, SharedSide::A),
            cross_common_b: kernel_cross_moment(pair, kp, SharedSide::B),
        }
    }

    /// Shared-node covariance `E[λ_ij λ_il] - E[λ]²` (or the `b` variant).
    pub fn shared_covariance(&self, side: SharedSide) -> f64 {
        let cross = match side {
            SharedSide::A => self.cross_common_a,
            SharedSide::B => self.cross_common_b,
        };
        cross - self.mean * self.mean
    }
}

/// `log E[exp(-x²/2)]` for `x ~ Normal(mu, var)` in `dim` independent coordinates
/// sharing the same variance, with `sq_mean = |mu|²`.
#[inline]
fn ln_gaussian_exp(sq_mean: f64, var: f64, dim: f64) -> f64 {
    let s = 1.0 + var;
    -0.5 * dim * s.ln() - sq_mean / (2.0 * s)
}

/// `E[exp(-x²/2)]` for scalar `x ~ Normal(mu, var)`:
/// `(1 + var)^{-1/2} exp(-mu² / (2 (1 + var)))`.
pub fn gaussian_exp_identity(mu: f64, var: f64) -> f64 {
    ln_gaussian_exp(mu * mu, var, 1.0).exp()
}

fn ln_theta(kp: &KernelParams) -> f64 {
    kp.theta.ln()
}

pub fn ln_expected_kernel(pair: &ClusterPair, kp: &KernelParams) -> f64 {
    // z_i - z_j ~ Normal(mu_a - mu_b, var_a + var_b)
    ln_theta(kp) + ln_gaussian_exp(pair.sq_dist, pair.var_a + pair.var_b, 2.0 * kp.half_q())
}

/// `E[λ_ij]` for `i` in group `a`, `j` in group `b`.
pub fn expected_kernel(pair: &ClusterPair, kp: &KernelParams) -> f64 {
    ln_expected_kernel(pair, kp).exp()
}

pub fn ln_kernel_second_moment(pair: &ClusterPair, kp: &KernelParams) -> f64 {
    // λ² = θ² exp(-|√2 (z_i - z_j)|² / 2)
    2.0 * ln_theta(kp)
        + ln_gaussian_exp(
            2.0 * pair.sq_dist,
            2.0 * (pair.var_a + pair.var_b),
            2.0 * kp.half_q(),
        )
}

/// `E[λ_ij²]`.
pub fn kernel_second_moment(pair: &ClusterPair, kp: &KernelParams) -> f64 {
    ln_kernel_second_moment(pair, kp).exp()
}

pub fn ln_kernel_cross_moment(pair: &ClusterPair, kp: &KernelParams, shared: SharedSide) -> f64 {
    let (shared_var, other_var) = match shared {
        SharedSide::A => (pair.var_a, pair.var_b),
        SharedSide::B => (pair.var_b, pair.var_a),
    };
    // |z_i - z_j|² + |z_i - z_l|² = |ξ|² + |χ|² with independent
    // ξ = (2 z_i - z_j - z_l)/√2 ~ Normal(√2 (mu_a - mu_b), 2 var_shared + var_other)
    // χ = (z_j - z_l)/√2 ~ Normal(0, var_other)
    let dim = 2.0 * kp.half_q();
    2.0 * ln_theta(kp)
        + ln_gaussian_exp(2.0 * pair.sq_dist, 2.0 * shared_var + other_var, dim)
        + ln_gaussian_exp(0.0, other_var, dim)
}

/// Cross moment of two edges sharing one node on side `shared`.
pub fn kernel_cross_moment(pair: &ClusterPair, kp: &KernelParams, shared: SharedSide) -> f64 {
    ln_kernel_cross_moment(pair, kp, shared).exp()
}

/// Squared cluster scale maximising `E[λ]` for two clusters of equal scale at
/// separation `delta` in `q` dimensions: `max(δ² - q, 0) / (2q)`.
pub fn optimal_scale_sq(delta: f64, q: usize) -> f64 {
    let q = q as f64;
    (delta * delta - q).max(0.0) / (2.0 * q)
}
