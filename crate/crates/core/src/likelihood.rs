//! Moment-matched beta-binomial / negative-binomial approximations of the
//! marginal law of each aggregate entry, and the resulting approximate
//! log-likelihood of a whole aggregate matrix.
//!
//! Entries are treated as independent; correlations between different
//! connection volumes are not modelled.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::kernel::KernelParams;
use crate::moments::{aggregate_moments, trials, GroupConfig, MomentsError, NetworkKind, PairMoments};
use crate::special::{ln_binomial, ln_factorial, ln_gamma_diff};

/// Floor on the overdispersion excess `f - 1` (and on `var - mean` for the
/// negative binomial). Keeps the concentration below about `1e10`.
pub const EPSILON: f64 = 1e-9;

/// Lower bound on the beta-binomial concentration. Only reached when the
/// requested variance is at (or numerically beyond) the two-point maximum.
const MIN_CONCENTRATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LikelihoodError {
    #[error("cannot match moments (mean {mean}, variance {variance}, trials {trials:?}): {reason}")]
    Domain {
        mean: f64,
        variance: f64,
        trials: Option<u64>,
        reason: &'static str,
    },
    #[error("aggregate matrix is {rows}x{cols} but there are {groups} group sizes")]
    SizeMismatch {
        rows: usize,
        cols: usize,
        groups: usize,
    },
    #[error("invalid aggregate matrix: {0}")]
    InvalidMatrix(String),
    #[error("entries exceed their number of trials: {}", format_excess(.0))]
    ExceedsTrials(Vec<TrialExcess>),
    #[error(transparent)]
    Moments(#[from] MomentsError),
}

/// One entry `Y_ab > t_ab` of an unweighted aggregate matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialExcess {
    pub a: usize,
    pub b: usize,
    pub count: u64,
    pub trials: u64,
}

fn format_excess(entries: &[TrialExcess]) -> String {
    entries
        .iter()
        .map(|e| format!("Y[{},{}]={} > t={}", e.a, e.b, e.count, e.trials))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Observed connection volumes between `r` groups.
///
/// Undirected matrices are stored symmetric; only entries with `a <= b` enter
/// the likelihood.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateMatrix {
    counts: DMatrix<u64>,
    kind: NetworkKind,
    sizes: Vec<usize>,
}

impl AggregateMatrix {
    pub fn new(
        counts: DMatrix<u64>,
        kind: NetworkKind,
        sizes: Vec<usize>,
    ) -> Result<Self, LikelihoodError> {
        let (rows, cols) = counts.shape();
        if rows != cols || rows != sizes.len() {
            return Err(LikelihoodError::SizeMismatch {
                rows,
                cols,
                groups: sizes.len(),
            });
        }
        if rows == 0 {
            return Err(LikelihoodError::InvalidMatrix("no groups".into()));
        }
        if let Some(g) = sizes.iter().position(|&n| n == 0) {
            return Err(LikelihoodError::InvalidMatrix(format!("group {g} is empty")));
        }
        if !kind.directed && counts != counts.transpose() {
            return Err(LikelihoodError::InvalidMatrix(
                "undirected aggregate matrix must be symmetric".into(),
            ));
        }
        Ok(Self {
            counts,
            kind,
            sizes,
        })
    }

    pub fn counts(&self) -> &DMatrix<u64> {
        &self.counts
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn get(&self, a: usize, b: usize) -> u64 {
        self.counts[(a, b)]
    }

    pub fn trials(&self, a: usize, b: usize) -> u64 {
        trials(&self.sizes, self.kind.directed, a, b)
    }

    /// Entries that carry information, in a fixed order: all `(a, b)` for
    /// directed networks, `a <= b` for undirected ones.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = self.n_groups();
        let directed = self.kind.directed;
        (0..r).flat_map(move |a| {
            let start = if directed { 0 } else { a };
            (start..r).map(move |b| (a, b))
        })
    }

    /// Number of edges (sum over informative entries).
    pub fn total(&self) -> u64 {
        self.entries().map(|(a, b)| self.get(a, b)).sum()
    }

    /// Observed edges divided by the number of possible edges.
    pub fn edge_density(&self) -> f64 {
        let possible: u64 = self.entries().map(|(a, b)| self.trials(a, b)).sum();
        if possible == 0 {
            0.0
        } else {
            self.total() as f64 / possible as f64
        }
    }

    /// Unweighted matrices must satisfy `Y_ab <= t_ab`.
    pub fn check_trials(&self) -> Result<(), LikelihoodError> {
        if self.kind.weighted {
            return Ok(());
        }
        let excess: Vec<_> = self
            .entries()
            .filter_map(|(a, b)| {
                let (count, trials) = (self.get(a, b), self.trials(a, b));
                (count > trials).then_some(TrialExcess {
                    a,
                    b,
                    count,
                    trials,
                })
            })
            .collect();
        if excess.is_empty() {
            Ok(())
        } else {
            Err(LikelihoodError::ExceedsTrials(excess))
        }
    }
}

/// Beta-binomial with `trials` trials and shapes `alpha`, `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaBinomialParams {
    pub trials: u64,
    pub alpha: f64,
    pub beta: f64,
}

impl BetaBinomialParams {
    pub fn mean(&self) -> f64 {
        self.trials as f64 * self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let t = self.trials as f64;
        let phi = self.alpha + self.beta;
        t * self.alpha * self.beta * (phi + t) / (phi * phi * (phi + 1.0))
    }

    pub fn ln_pmf(&self, y: u64) -> f64 {
        beta_binomial_log_pmf(y, self)
    }
}

/// `ln C(t, y) + ln B(y + α, t - y + β) - ln B(α, β)`; `-∞` outside `0..=t`.
pub fn beta_binomial_log_pmf(y: u64, p: &BetaBinomialParams) -> f64 {
    let t = p.trials;
    if y > t {
        return f64::NEG_INFINITY;
    }
    ln_binomial(t, y) + ln_gamma_diff(p.alpha, y as f64) + ln_gamma_diff(p.beta, (t - y) as f64)
        - ln_gamma_diff(p.alpha + p.beta, t as f64)
}

/// Beta-binomial with the given mean and variance on `0..=trials`.
///
/// Underdispersed targets (`f <= 1 + ε`) map to the binomial limit with
/// concentration `(t - f) / ε`.
pub fn match_beta_binomial(
    mean: f64,
    variance: f64,
    trials: u64,
) -> Result<BetaBinomialParams, LikelihoodError> {
    let domain = |reason| LikelihoodError::Domain {
        mean,
        variance,
        trials: Some(trials),
        reason,
    };
    let t = trials as f64;
    if !(mean.is_finite() && variance.is_finite()) {
        return Err(domain("non-finite moments"));
    }
    if mean <= 0.0 || mean >= t {
        return Err(domain("mean must lie strictly between 0 and the number of trials"));
    }
    if variance <= 0.0 {
        return Err(domain("variance must be positive"));
    }
    let rho = mean / t;
    let overdispersion = variance / (t * rho * (1.0 - rho));
    let phi = ((t - overdispersion) / (overdispersion - 1.0).max(EPSILON)).max(MIN_CONCENTRATION);
    Ok(BetaBinomialParams {
        trials,
        alpha: rho * phi,
        beta: (1.0 - rho) * phi,
    })
}

/// Negative binomial with `size` (real-valued number of successes) and
/// success probability `prob`: `P(k) ∝ Γ(k + size)/k! prob^size (1 - prob)^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegBinomialParams {
    pub size: f64,
    pub prob: f64,
    // kept so ln(1 - prob) is exact near the Poisson limit
    mean: f64,
}

impl NegBinomialParams {
    pub fn new(size: f64, prob: f64) -> Result<Self, LikelihoodError> {
        if !(size > 0.0 && size.is_finite() && prob > 0.0 && prob <= 1.0) {
            return Err(LikelihoodError::Domain {
                mean: f64::NAN,
                variance: f64::NAN,
                trials: None,
                reason: "size must be positive and prob in (0, 1]",
            });
        }
        Ok(Self {
            size,
            prob,
            mean: size * (1.0 - prob) / prob,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.mean + self.mean * self.mean / self.size
    }

    pub fn ln_pmf(&self, k: u64) -> f64 {
        negative_binomial_log_pmf(k, self)
    }
}

pub fn negative_binomial_log_pmf(k: u64, p: &NegBinomialParams) -> f64 {
    let ln_prob = -(p.mean / p.size).ln_1p();
    let kf = k as f64;
    let tail = if k == 0 {
        0.0
    } else if p.mean <= 0.0 {
        return f64::NEG_INFINITY;
    } else {
        kf * (p.mean.ln() - (p.size + p.mean).ln())
    };
    ln_gamma_diff(p.size, kf) - ln_factorial(k) + p.size * ln_prob + tail
}

/// Negative binomial with the given mean and variance; equidispersed targets
/// map to the Poisson limit `size = mean² / ε`.
pub fn match_negative_binomial(mean: f64, variance: f64) -> Result<NegBinomialParams, LikelihoodError> {
    if !(mean > 0.0 && variance > 0.0 && mean.is_finite() && variance.is_finite()) {
        return Err(LikelihoodError::Domain {
            mean,
            variance,
            trials: None,
            reason: "mean and variance must be positive",
        });
    }
    let size = mean * mean / (variance - mean).max(EPSILON);
    // equals mean / variance whenever the variance is representable
    let prob = size / (size + mean);
    Ok(NegBinomialParams { size, prob, mean })
}

/// Log-probability of one entry under its moment-matched approximation.
pub fn entry_log_pmf(y: u64, moments: &PairMoments, weighted: bool) -> f64 {
    let PairMoments {
        mean,
        variance,
        trials: t,
    } = *moments;
    if weighted {
        if mean <= 0.0 {
            return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        return match match_negative_binomial(mean, variance.max(mean)) {
            Ok(p) => p.ln_pmf(y),
            Err(_) => f64::NEG_INFINITY,
        };
    }
    if y > t {
        return f64::NEG_INFINITY;
    }
    let tf = t as f64;
    // degenerate laws: no trials, or zero / full propensity
    if t == 0 || mean <= 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if mean >= tf {
        return if y == t { 0.0 } else { f64::NEG_INFINITY };
    }
    let rho = mean / tf;
    let variance = if variance > 0.0 {
        variance
    } else {
        tf * rho * (1.0 - rho)
    };
    match match_beta_binomial(mean, variance, t) {
        Ok(p) => p.ln_pmf(y),
        Err(_) => f64::NEG_INFINITY,
    }
}

fn check_consistent(y: &AggregateMatrix, cfg: &GroupConfig) -> Result<(), LikelihoodError> {
    if y.sizes() != cfg.sizes() {
        return Err(LikelihoodError::SizeMismatch {
            rows: y.n_groups(),
            cols: y.n_groups(),
            groups: cfg.n_groups(),
        });
    }
    Ok(())
}

/// Per-entry log-likelihood terms; uninformative entries (lower triangle of
/// undirected matrices) are zero.
pub fn entry_log_likelihoods(
    y: &AggregateMatrix,
    cfg: &GroupConfig,
    kp: &KernelParams,
) -> Result<DMatrix<f64>, LikelihoodError> {
    check_consistent(y, cfg)?;
    let m = aggregate_moments(cfg, kp, y.kind())?;
    let r = y.n_groups();
    let mut out = DMatrix::zeros(r, r);
    for (a, b) in y.entries() {
        let pm = PairMoments {
            mean: m.mean[(a, b)],
            variance: m.variance[(a, b)],
            trials: m.trials[(a, b)],
        };
        out[(a, b)] = entry_log_pmf(y.get(a, b), &pm, y.kind().weighted);
    }
    Ok(out)
}

/// Sum of matched log-pmfs over all informative entries, in row-major order.
///
/// Returns `-∞` when some unweighted entry exceeds its number of trials; use
/// [`AggregateMatrix::check_trials`] or [`entry_log_likelihoods`] to locate it.
pub fn approximate_log_likelihood(
    y: &AggregateMatrix,
    cfg: &GroupConfig,
    kp: &KernelParams,
) -> Result<f64, LikelihoodError> {
    let terms = entry_log_likelihoods(y, cfg, kp)?;
    let total = y.entries().map(|(a, b)| terms[(a, b)]).sum::<f64>();
    if total == f64::NEG_INFINITY {
        if let Err(e) = y.check_trials() {
            log::debug!("{e}");
        }
    }
    Ok(total)
}
