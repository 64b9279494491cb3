//! Brute-force references: Monte Carlo moments, Monte Carlo kernel moments and
//! exhaustive enumeration of second-moment terms.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{aggregate, simulate_network_with, SimulateError};
use crate::kernel::{ClusterPair, KernelParams};
use crate::moments::{GroupConfig, NetworkKind, TermClass, TermTable};
use crate::seed::stream_rng;

pub const MIN_SIMULATIONS: usize = 100;
pub const ENUMERATION_LIMIT: u64 = 8;

/// Sample mean and variance of a batch of simulations, with jackknife
/// standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub mean_hat: f64,
    pub var_hat: f64,
    pub std_error_mean: f64,
    pub std_error_var: f64,
    pub n_sims: usize,
}

impl MomentEstimate {
    /// Panics on fewer than three samples (the leave-one-out variance needs two).
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n >= 3, "need at least three samples, got {n}");
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        let var = ss / (nf - 1.0);
        // leave-one-out variances without a second pass over the data
        let loo: Vec<f64> = xs
            .iter()
            .map(|x| {
                let d = x - mean;
                (ss - nf / (nf - 1.0) * d * d) / (nf - 2.0)
            })
            .collect();
        let loo_mean = loo.iter().sum::<f64>() / nf;
        let jk: f64 = loo.iter().map(|v| (v - loo_mean) * (v - loo_mean)).sum();
        Self {
            mean_hat: mean,
            var_hat: var,
            std_error_mean: (var / nf).sqrt(),
            std_error_var: ((nf - 1.0) / nf * jk).sqrt(),
            n_sims: n,
        }
    }
}

/// Restriction of `cfg` to groups `a` and `b` (or just `a`), with the index of
/// the requested entry in the reduced configuration.
fn reduced_config(cfg: &GroupConfig, a: usize, b: usize) -> Result<(GroupConfig, (usize, usize)), SimulateError> {
    let r = cfg.n_groups();
    for index in [a, b] {
        if index >= r {
            return Err(SimulateError::IndexOutOfRange { index, groups: r });
        }
    }
    let groups: Vec<usize> = if a == b { vec![a] } else { vec![a, b] };
    let q = cfg.dim();
    let centres = DMatrix::from_fn(groups.len(), q, |g, s| cfg.centres()[(groups[g], s)]);
    let sizes = groups.iter().map(|&g| cfg.sizes()[g]).collect();
    let scales = groups.iter().map(|&g| cfg.scales()[g]).collect();
    let reduced = GroupConfig::new(sizes, centres, scales).expect("subset of a valid config");
    let entry = if a == b { (0, 0) } else { (0, 1) };
    Ok((reduced, entry))
}

/// `Y_ab` from `n_sims` independent simulate-and-aggregate runs. Only groups
/// `a` and `b` are simulated, since no other node affects the entry.
/// Replication `k` uses stream `k` of `seed`.
pub fn mc_samples(
    cfg: &GroupConfig,
    kp: &KernelParams,
    kind: NetworkKind,
    a: usize,
    b: usize,
    n_sims: usize,
    seed: u64,
) -> Result<Vec<u64>, SimulateError> {
    let (reduced, entry) = reduced_config(cfg, a, b)?;
    (0..n_sims)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let net = simulate_network_with(&reduced, kp, kind, &mut rng);
            Ok(aggregate(&net)?.get(entry.0, entry.1))
        })
        .collect()
}

pub fn mc_moments(
    cfg: &GroupConfig,
    kp: &KernelParams,
    kind: NetworkKind,
    a: usize,
    b: usize,
    n_sims: usize,
    seed: u64,
) -> Result<MomentEstimate, SimulateError> {
    if n_sims < MIN_SIMULATIONS {
        return Err(SimulateError::TooFewSimulations {
            got: n_sims,
            min: MIN_SIMULATIONS,
        });
    }
    let ys: Vec<f64> = mc_samples(cfg, kp, kind, a, b, n_sims, seed)?
        .into_iter()
        .map(|y| y as f64)
        .collect();
    Ok(MomentEstimate::from_samples(&ys))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// `|value - target|` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.value == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - target).abs() / self.std_error
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMomentEstimates {
    pub mean: Estimate,
    pub second: Estimate,
    /// `E[λ(x, y) λ(x, y')]`, shared node in the first cluster.
    pub cross_a: Estimate,
    /// `E[λ(x, y) λ(x', y)]`, shared node in the second cluster.
    pub cross_b: Estimate,
    pub n_draws: usize,
}

const KERNEL_BLOCK: usize = 4096;

#[derive(Default, Clone, Copy)]
struct Sums {
    s: [f64; 4],
    ss: [f64; 4],
}

fn draw_point<R: Rng + ?Sized>(centre: &[f64], sd: f64, out: &mut [f64], rng: &mut R) {
    for (o, &c) in out.iter_mut().zip(centre) {
        let e: f64 = StandardNormal.sample(rng);
        *o = c + sd * e;
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Monte Carlo estimates of the four kernel moments for clusters at distance
/// `sqrt(pair.sq_dist())` from `n_draws` independent coordinate sets.
pub fn mc_kernel_moments(
    pair: &ClusterPair,
    kp: &KernelParams,
    n_draws: usize,
    seed: u64,
) -> KernelMomentEstimates {
    assert!(n_draws >= 2, "need at least two draws");
    let q = kp.q();
    let theta = kp.theta();
    let mut centre_b = vec![0.0; q];
    centre_b[0] = pair.sq_dist().sqrt();
    let centre_a = vec![0.0; q];
    let (sd_a, sd_b) = (pair.var_a().sqrt(), pair.var_b().sqrt());
    let n_blocks = n_draws.div_ceil(KERNEL_BLOCK);
    let blocks: Vec<Sums> = (0..n_blocks)
        .into_par_iter()
        .map(|blk| {
            let mut rng = stream_rng(seed, blk as u64);
            let len = KERNEL_BLOCK.min(n_draws - blk * KERNEL_BLOCK);
            let (mut x, mut x2, mut y, mut y2) = (vec![0.0; q], vec![0.0; q], vec![0.0; q], vec![0.0; q]);
            let mut sums = Sums::default();
            for _ in 0..len {
                draw_point(&centre_a, sd_a, &mut x, &mut rng);
                draw_point(&centre_a, sd_a, &mut x2, &mut rng);
                draw_point(&centre_b, sd_b, &mut y, &mut rng);
                draw_point(&centre_b, sd_b, &mut y2, &mut rng);
                let l = theta * (-0.5 * sq_dist(&x, &y)).exp();
                let l_a = theta * (-0.5 * sq_dist(&x, &y2)).exp();
                let l_b = theta * (-0.5 * sq_dist(&x2, &y)).exp();
                let v = [l, l * l, l * l_a, l * l_b];
                for k in 0..4 {
                    sums.s[k] += v[k];
                    sums.ss[k] += v[k] * v[k];
                }
            }
            sums
        })
        .collect();
    let mut total = Sums::default();
    for b in &blocks {
        for k in 0..4 {
            total.s[k] += b.s[k];
            total.ss[k] += b.ss[k];
        }
    }
    let n = n_draws as f64;
    let est = |k: usize| {
        let mean = total.s[k] / n;
        let var = ((total.ss[k] - n * mean * mean) / (n - 1.0)).max(0.0);
        Estimate {
            value: mean,
            std_error: (var / n).sqrt(),
        }
    };
    KernelMomentEstimates {
        mean: est(0),
        second: est(1),
        cross_a: est(2),
        cross_b: est(3),
        n_draws,
    }
}

fn classify(i: u64, j: u64, k: u64, l: u64) -> TermClass {
    use TermClass::*;
    match (i == k, j == l, i == l, j == k) {
        (true, true, _, _) => Matched,
        (_, _, true, true) => Reciprocal,
        (true, false, _, _) => SharedSource,
        (false, true, _, _) => SharedTarget,
        (_, _, true, false) => Incoming,
        (_, _, false, true) => Outgoing,
        _ => Disjoint,
    }
}

/// Counts every term of `E[Y²] = Σ Σ E[y_ij y_kl]` by class, iterating over all
/// index tuples. Nodes of group `a` are `0..n_a`, nodes of group `b` follow.
pub fn enumerate_second_moment(
    n_a: u64,
    n_b: Option<u64>,
    kind: NetworkKind,
) -> Result<TermTable, SimulateError> {
    for size in std::iter::once(n_a).chain(n_b) {
        if size > ENUMERATION_LIMIT {
            return Err(SimulateError::TooLarge {
                size,
                limit: ENUMERATION_LIMIT,
            });
        }
    }
    // slots (i, j) with i the target in group a and j the source
    let slots: Vec<(u64, u64)> = match n_b {
        None => (0..n_a)
            .flat_map(|i| (0..n_a).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && (kind.directed || i < j))
            .collect(),
        Some(n_b) => (0..n_a)
            .flat_map(|i| (n_a..n_a + n_b).map(move |j| (i, j)))
            .collect(),
    };
    let mut table = TermTable {
        prefactor: slots.len() as u64,
        counts: [0; 7],
    };
    for &(i, j) in &slots {
        for &(k, l) in &slots {
            table.counts[classify(i, j, k, l).index()] += 1;
        }
    }
    Ok(table)
}
