//! Marginal mean and variance of aggregate connection volumes `Y_ab`.
//!
//! The second moment of `Y_ab` is a sum over pairs of edges; grouping those
//! pairs by which node indices they share gives seven term classes whose
//! multiplicities are tabulated by [`term_coefficients`]. The variance is
//! assembled from that table as `Σ_c count_c (E_c - E[λ]²)`, which avoids
//! subtracting two `O(n⁴)` quantities and keeps one code path for directed,
//! undirected and weighted networks.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::kernel::{ClusterPair, KernelError, KernelMoments, KernelParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentsError {
    #[error("group index {index} out of range for {groups} groups")]
    IndexOutOfRange { index: usize, groups: usize },
    #[error("between-group variance needs distinct groups, got a = b = {0}")]
    SameGroup(usize),
    #[error("invalid group configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Directed/undirected and Bernoulli/Poisson edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NetworkKind {
    pub directed: bool,
    pub weighted: bool,
}

impl NetworkKind {
    pub const DIRECTED: Self = Self {
        directed: true,
        weighted: false,
    };
    pub const UNDIRECTED: Self = Self {
        directed: false,
        weighted: false,
    };
}

/// Sizes, centres (`r × q`) and scales of the `r` groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupConfig {
    sizes: Vec<usize>,
    centres: DMatrix<f64>,
    scales: Vec<f64>,
}

impl GroupConfig {
    pub fn new(
        sizes: Vec<usize>,
        centres: DMatrix<f64>,
        scales: Vec<f64>,
    ) -> Result<Self, MomentsError> {
        let r = sizes.len();
        if r == 0 {
            return Err(MomentsError::InvalidConfig("no groups".into()));
        }
        if centres.nrows() != r || scales.len() != r {
            return Err(MomentsError::InvalidConfig(format!(
                "{} sizes, {} centre rows, {} scales",
                r,
                centres.nrows(),
                scales.len()
            )));
        }
        if centres.ncols() == 0 {
            return Err(MomentsError::InvalidConfig("zero latent dimension".into()));
        }
        if let Some(g) = sizes.iter().position(|&n| n == 0) {
            return Err(MomentsError::InvalidConfig(format!("group {g} is empty")));
        }
        if let Some(s) = scales.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(MomentsError::InvalidConfig(format!("invalid scale {s}")));
        }
        if centres.iter().any(|c| !c.is_finite()) {
            return Err(MomentsError::InvalidConfig("non-finite centre".into()));
        }
        Ok(Self {
            sizes,
            centres,
            scales,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.centres.ncols()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn centres(&self) -> &DMatrix<f64> {
        &self.centres
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn n_nodes(&self) -> usize {
        self.sizes.iter().sum()
    }

    fn check_index(&self, index: usize) -> Result<(), MomentsError> {
        if index < self.n_groups() {
            Ok(())
        } else {
            Err(MomentsError::IndexOutOfRange {
                index,
                groups: self.n_groups(),
            })
        }
    }

    /// Kernel view of groups `a` and `b`.
    pub fn pair(&self, a: usize, b: usize) -> Result<ClusterPair, MomentsError> {
        self.check_index(a)?;
        self.check_index(b)?;
        let sq_dist: f64 = (0..self.dim())
            .map(|s| {
                let d = self.centres[(a, s)] - self.centres[(b, s)];
                d * d
            })
            .sum();
        Ok(ClusterPair::from_separation(
            sq_dist.sqrt(),
            self.scales[a] * self.scales[a],
            self.scales[b] * self.scales[b],
        )?)
    }
}

/// Number of trials `t_ab`: the largest possible unweighted `Y_ab`.
pub fn trials(sizes: &[usize], directed: bool, a: usize, b: usize) -> u64 {
    let na = sizes[a] as u64;
    if a == b {
        let ordered = na * na.saturating_sub(1);
        if directed {
            ordered
        } else {
            ordered / 2
        }
    } else {
        na * sizes[b] as u64
    }
}

/// The seven classes of edge pairs `(y_ij, y_kl)` contributing to `E[Y²]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermClass {
    /// `y_ij y_ij`
    Matched,
    /// `y_ij y_ji`
    Reciprocal,
    /// `y_ij y_il`
    SharedSource,
    /// `y_ij y_kj`
    SharedTarget,
    /// `y_ij y_ki`
    Incoming,
    /// `y_ij y_jl`
    Outgoing,
    /// `y_ij y_kl`
    Disjoint,
}

impl TermClass {
    pub const ALL: [TermClass; 7] = [
        TermClass::Matched,
        TermClass::Reciprocal,
        TermClass::SharedSource,
        TermClass::SharedTarget,
        TermClass::Incoming,
        TermClass::Outgoing,
        TermClass::Disjoint,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            TermClass::Matched => "y_ij y_ij",
            TermClass::Reciprocal => "y_ij y_ji",
            TermClass::SharedSource => "y_ij y_il",
            TermClass::SharedTarget => "y_ij y_kj",
            TermClass::Incoming => "y_ij y_ki",
            TermClass::Outgoing => "y_ij y_jl",
            TermClass::Disjoint => "y_ij y_kl",
        }
    }
}

/// Multiplicities of each [`TermClass`] in the double sum defining `E[Y_ab²]`.
///
/// `counts` are absolute occurrence counts; `prefactor` is the column
/// prefactor of the table (the number of edge slots `t_ab`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TermTable {
    pub prefactor: u64,
    pub counts: [u64; 7],
}

impl TermTable {
    pub fn count(&self, class: TermClass) -> u64 {
        self.counts[class.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-slot coefficients, i.e. `counts / prefactor`.
    pub fn per_unit(&self) -> [f64; 7] {
        let p = self.prefactor.max(1) as f64;
        self.counts.map(|c| c as f64 / p)
    }

    pub fn is_empty(&self) -> bool {
        self.prefactor == 0
    }
}

/// Term multiplicities for within-group (`n_b = None`) or between-group pairs.
///
/// Within-group tables for `n_a < 2` are empty. Between-group tables are the
/// same for directed and undirected networks.
pub fn term_coefficients(n_a: u64, n_b: Option<u64>, kind: NetworkKind) -> TermTable {
    use TermClass::*;
    let mut counts = [0u64; 7];
    match n_b {
        None => {
            if n_a < 2 {
                return TermTable::default();
            }
            let pairs = n_a * (n_a - 1);
            let triples = pairs * (n_a - 2);
            let quads = triples * n_a.saturating_sub(3);
            if kind.directed {
                counts[Matched.index()] = pairs;
                counts[Reciprocal.index()] = pairs;
                for c in [SharedSource, SharedTarget, Incoming, Outgoing] {
                    counts[c.index()] = triples;
                }
                counts[Disjoint.index()] = quads;
                return TermTable {
                    prefactor: pairs,
                    counts,
                };
            }
            counts[Matched.index()] = pairs / 2;
            counts[SharedSource.index()] = triples / 3;
            counts[SharedTarget.index()] = triples / 3;
            counts[Incoming.index()] = triples / 6;
            counts[Outgoing.index()] = triples / 6;
            counts[Disjoint.index()] = quads / 4;
            TermTable {
                prefactor: pairs / 2,
                counts,
            }
        }
        Some(n_b) => {
            let slots = n_a * n_b;
            counts[Matched.index()] = slots;
            counts[SharedSource.index()] = slots * n_b.saturating_sub(1);
            counts[SharedTarget.index()] = slots * n_a.saturating_sub(1);
            counts[Disjoint.index()] = slots * n_a.saturating_sub(1) * n_b.saturating_sub(1);
            TermTable {
                prefactor: slots,
                counts,
            }
        }
    }
}

/// Expected value of each term class for one pair of groups.
fn class_expectations(m: &KernelMoments, within: bool, weighted: bool) -> [f64; 7] {
    use TermClass::*;
    let mean_sq = m.mean * m.mean;
    let mut e = [mean_sq; 7];
    // Bernoulli: E[y²] = E[λ]; Poisson: E[y²] = E[λ(1 + λ)].
    e[Matched.index()] = if weighted { m.mean + m.second } else { m.mean };
    e[Reciprocal.index()] = m.second;
    if within {
        for c in [SharedSource, SharedTarget, Incoming, Outgoing] {
            e[c.index()] = m.cross_common_a;
        }
    } else {
        e[SharedSource.index()] = m.cross_common_a;
        e[SharedTarget.index()] = m.cross_common_b;
    }
    e
}

fn variance_from_table(table: &TermTable, expectations: &[f64; 7], mean: f64) -> f64 {
    let mean_sq = mean * mean;
    let var: f64 = table
        .counts
        .iter()
        .zip(expectations)
        .map(|(&count, &e)| count as f64 * (e - mean_sq))
        .sum();
    var.max(0.0)
}

/// Mean, variance and trials of a single aggregate entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    pub mean: f64,
    pub variance: f64,
    pub trials: u64,
}

fn pair_moments_from_kernel(
    cfg: &GroupConfig,
    kind: NetworkKind,
    a: usize,
    b: usize,
    km: &KernelMoments,
) -> PairMoments {
    let sizes = cfg.sizes();
    let t = trials(sizes, kind.directed, a, b);
    let table = if a == b {
        term_coefficients(sizes[a] as u64, None, kind)
    } else {
        term_coefficients(sizes[a] as u64, Some(sizes[b] as u64), kind)
    };
    let e = class_expectations(km, a == b, kind.weighted);
    PairMoments {
        mean: t as f64 * km.mean,
        variance: variance_from_table(&table, &e, km.mean),
        trials: t,
    }
}

/// Mean and variance of `Y_ab` (works for `a == b` and `a != b`).
pub fn pair_moments(
    cfg: &GroupConfig,
    kp: &KernelParams,
    kind: NetworkKind,
    a: usize,
    b: usize,
) -> Result<PairMoments, MomentsError> {
    let pair = cfg.pair(a, b)?;
    Ok(pair_moments_from_kernel(
        cfg,
        kind,
        a,
        b,
        &KernelMoments::new(&pair, kp),
    ))
}

/// `E[Y_ab] = t_ab E[λ]`.
pub fn aggregate_mean(
    cfg: &GroupConfig,
    kp: &KernelParams,
    kind: NetworkKind,
    a: usize,
    b: usize,
) -> Result<f64, MomentsError> {
    let pair = cfg.pair(a, b)?;
    Ok(trials(cfg.sizes(), kind.directed, a, b) as f64 * crate::kernel::expected_kernel(&pair, kp))
}

/// `Var Y_aa`; zero for groups with fewer than two nodes.
pub fn within_group_variance(
    cfg: &GroupConfig,
    kp: &KernelParams,
    kind: NetworkKind,
    a: usize,
) -> Result<f64, MomentsError> {
    Ok(pair_moments(cfg, kp, kind, a, a)?.variance)
}

/// `Var Y_ab` for `a != b`.
pub fn between_group_variance(
    cfg: &GroupConfig,
    kp: &KernelParams,
    kind: NetworkKind,
    a: usize,
    b: usize,
) -> Result<f64, MomentsError> {
    if a == b {
        cfg.check_index(a)?;
        return Err(MomentsError::SameGroup(a));
    }
    Ok(pair_moments(cfg, kp, kind, a, b)?.variance)
}

/// Moments of every entry of the aggregate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMoments {
    pub mean: DMatrix<f64>,
    pub variance: DMatrix<f64>,
    pub trials: DMatrix<u64>,
}

pub fn aggregate_moments(
    cfg: &GroupConfig,
    kp: &KernelParams,
    kind: NetworkKind,
) -> Result<AggregateMoments, MomentsError> {
    let r = cfg.n_groups();
    let mut mean = DMatrix::zeros(r, r);
    let mut variance = DMatrix::zeros(r, r);
    let mut t = DMatrix::zeros(r, r);
    for a in 0..r {
        for b in a..r {
            let km = KernelMoments::new(&cfg.pair(a, b)?, kp);
            let m = pair_moments_from_kernel(cfg, kind, a, b, &km);
            mean[(a, b)] = m.mean;
            variance[(a, b)] = m.variance;
            t[(a, b)] = m.trials;
            if a != b {
                // the model is symmetric in expectation; mirror with a and b exchanged
                let swapped = KernelMoments {
                    cross_common_a: km.cross_common_b,
                    cross_common_b: km.cross_common_a,
                    ..km
                };
                let m = pair_moments_from_kernel(cfg, kind, b, a, &swapped);
                mean[(b, a)] = m.mean;
                variance[(b, a)] = m.variance;
                t[(b, a)] = m.trials;
            }
        }
    }
    Ok(AggregateMoments {
        mean,
        variance,
        trials: t,
    })
}
