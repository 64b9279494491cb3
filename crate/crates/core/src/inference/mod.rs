//! Posterior sampling with restarts, chain selection, alignment and summaries.
//!
//! The sampler is a blockwise adaptive random-walk Metropolis scheme. During
//! warmup each block's step size follows a Robbins–Monro recursion towards a
//! target acceptance rate, and block covariances are estimated from earlier
//! warmup draws at the half and three-quarter marks, where a joint block over
//! all coordinates is also switched on. The proposal kernel is frozen when
//! sampling starts.

mod align;
mod diagnostics;
mod draws;
mod summary;

pub use align::{align_to, mean_squared_deviation, procrustes_align, AlignedCentres, AlignedPosterior};
pub use diagnostics::{effective_sample_size, percentile};
pub use draws::{read_draws, write_draws, DrawTable};
pub use summary::{degeneracy_contour, summarize, ParamSummary, PosteriorSummary};

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{logistic, ModelError, PosteriorModel};
use crate::seed::{rng_from_seed, split_seed};

pub const MAX_INIT_ATTEMPTS: usize = 100;
pub const MIN_SUMMARY_DRAWS: usize = 100;
const INIT_SD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("no finite log-density after {attempts} initial draws")]
    InitFailed { attempts: usize },
    #[error("every chain failed: {0}")]
    AllChainsFailed(String),
    #[error("{got} draws, at least {min} required")]
    TooFewDraws { got: usize, min: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed draw file on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Target density over flat vectors.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Unnormalised log-density; `-∞` outside the support.
    fn log_density(&self, x: &[f64]) -> f64;

    /// Coordinate blocks updated together.
    fn blocks(&self) -> Vec<Range<usize>> {
        vec![0..self.dim()]
    }

    /// Random starting point; independent `Normal(0, 0.1)` coordinates by default.
    fn initial_point(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let normal = Normal::new(0.0, INIT_SD).expect("valid normal");
        (0..self.dim()).map(|_| normal.sample(rng)).collect()
    }
}

impl LogDensity for PosteriorModel {
    fn dim(&self) -> usize {
        self.layout().len()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_density_flat(x)
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        self.layout().blocks()
    }

    /// `eta` starts at `logistic(Normal(0, 0.1))` so that it lies in `(0, 1)`.
    fn initial_point(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let normal = Normal::new(0.0, INIT_SD).expect("valid normal");
        let mut x: Vec<f64> = (0..self.layout().len()).map(|_| normal.sample(rng)).collect();
        let eta = self.layout().eta_offset()..self.layout().log_tau_index();
        for v in &mut x[eta] {
            *v = logistic(*v);
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    /// Sweeps over all blocks per recorded draw.
    pub thin: usize,
    pub seed: u64,
    /// Starting step size per block; empty means `0.1` everywhere.
    pub initial_step_scales: Vec<f64>,
    pub adapt_target: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 10,
            n_warmup: 2000,
            n_samples: 2000,
            thin: 1,
            seed: 0,
            initial_step_scales: Vec::new(),
            adapt_target: 0.3,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let fail = |m: &str| Err(InferenceError::Config(m.to_string()));
        if self.n_chains == 0 {
            return fail("n_chains must be positive");
        }
        if self.n_warmup == 0 || self.n_samples == 0 {
            return fail("n_warmup and n_samples must be positive");
        }
        if self.thin == 0 {
            return fail("thin must be positive");
        }
        if !(self.adapt_target > 0.1 && self.adapt_target < 0.9) {
            return fail("adapt_target must lie in (0.1, 0.9)");
        }
        if self.initial_step_scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return fail("step scales must be positive");
        }
        Ok(())
    }
}

/// Post-warmup output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub id: usize,
    pub seed: u64,
    pub draws: Vec<Vec<f64>>,
    pub log_densities: Vec<f64>,
    /// Fraction of accepted proposals over all blocks after warmup.
    pub acceptance_rate: f64,
    pub block_acceptance: Vec<f64>,
    /// Hash of the frozen proposal kernel, taken before and after sampling.
    pub kernel_checksum: u64,
}

impl PosteriorChain {
    pub fn median_log_density(&self) -> f64 {
        percentile(&self.log_densities, 0.5)
    }

    pub fn best_draw(&self) -> usize {
        self.log_densities
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }
}

#[derive(Debug, Clone)]
struct BlockKernel {
    range: Range<usize>,
    log_scale: f64,
    /// Lower Cholesky factor of the block covariance, identity when absent.
    chol: Option<DMatrix<f64>>,
    accepted: u64,
    proposed: u64,
}

impl BlockKernel {
    fn new(range: Range<usize>, scale: f64) -> Self {
        Self {
            range,
            log_scale: scale.ln(),
            chol: None,
            accepted: 0,
            proposed: 0,
        }
    }

    fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let len = self.range.len();
        let z = DVector::from_fn(len, |_, _| StandardNormal.sample(rng));
        let step = match &self.chol {
            Some(l) => l * z,
            None => z,
        } * self.log_scale.exp();
        let mut out = x.to_vec();
        for (k, i) in self.range.clone().enumerate() {
            out[i] += step[k];
        }
        out
    }
}

fn kernel_checksum(blocks: &[BlockKernel]) -> u64 {
    // FNV-1a over the bit patterns of everything a proposal depends on
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |v: u64| {
        for byte in v.to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for b in blocks {
        feed(b.range.start as u64);
        feed(b.range.end as u64);
        feed(b.log_scale.to_bits());
        if let Some(l) = &b.chol {
            l.iter().for_each(|v| feed(v.to_bits()));
        }
    }
    h
}

fn sample_covariance(draws: &[Vec<f64>]) -> DMatrix<f64> {
    let n = draws.len();
    let d = draws[0].len();
    let mut mean = DVector::zeros(d);
    for x in draws {
        mean += DVector::from_column_slice(x);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for x in draws {
        let c = DVector::from_column_slice(x) - &mean;
        cov += &c * c.transpose();
    }
    cov / (n as f64 - 1.0)
}

/// Cholesky factor of `cov` with a small ridge, or `None` if it stays singular.
fn regularised_cholesky(cov: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = cov.nrows();
    let avg = (0..d).map(|i| cov[(i, i)]).sum::<f64>() / d as f64;
    if !(avg > 0.0 && avg.is_finite()) {
        return None;
    }
    let ridge = DMatrix::identity(d, d) * (1e-6 * avg + 1e-12);
    (cov + ridge).cholesky().map(|c| c.l())
}

/// Replaces block proposals by covariance-shaped ones estimated from `history`
/// and (re)creates the joint block.
fn reshape_kernel(blocks: &mut Vec<BlockKernel>, n_user_blocks: usize, dim: usize, history: &[Vec<f64>]) {
    if history.len() < dim + 2 {
        return;
    }
    let cov = sample_covariance(history);
    for b in blocks.iter_mut().take(n_user_blocks) {
        let r = b.range.clone();
        let sub = cov.view((r.start, r.start), (r.len(), r.len())).clone_owned();
        if let Some(l) = regularised_cholesky(&sub) {
            b.chol = Some(l);
            b.log_scale = (2.38 / (r.len() as f64).sqrt()).ln();
        }
    }
    if let Some(l) = regularised_cholesky(&cov) {
        let mut joint = BlockKernel::new(0..dim, 2.38 / (dim as f64).sqrt());
        joint.chol = Some(l);
        blocks.truncate(n_user_blocks);
        blocks.push(joint);
    }
}

struct ChainState {
    x: Vec<f64>,
    lp: f64,
}

fn sweep<T: LogDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    blocks: &mut [BlockKernel],
    state: &mut ChainState,
    rng: &mut R,
    adapt: Option<(f64, f64)>,
) {
    for b in blocks.iter_mut() {
        let proposal = b.propose(&state.x, rng);
        let lp = target.log_density(&proposal);
        let log_ratio = lp - state.lp;
        let u: f64 = rng.random();
        let accept = lp.is_finite() && (log_ratio >= 0.0 || u.ln() < log_ratio);
        b.proposed += 1;
        if accept {
            b.accepted += 1;
            state.x = proposal;
            state.lp = lp;
        }
        if let Some((gain, goal)) = adapt {
            let alpha = if lp.is_finite() { log_ratio.min(0.0).exp() } else { 0.0 };
            b.log_scale += gain * (alpha - goal);
        }
    }
}

fn initialise<T: LogDensity + ?Sized, R: rand::RngCore>(
    target: &T,
    init: Option<&[f64]>,
    rng: &mut R,
) -> Result<ChainState, InferenceError> {
    if let Some(x) = init {
        if x.len() != target.dim() {
            return Err(InferenceError::Shape(format!(
                "initial point has {} coordinates, target has {}",
                x.len(),
                target.dim()
            )));
        }
        let lp = target.log_density(x);
        return if lp.is_finite() {
            Ok(ChainState { x: x.to_vec(), lp })
        } else {
            Err(InferenceError::InitFailed { attempts: 1 })
        };
    }
    for _ in 0..MAX_INIT_ATTEMPTS {
        let x = target.initial_point(rng);
        let lp = target.log_density(&x);
        if lp.is_finite() {
            return Ok(ChainState { x, lp });
        }
    }
    Err(InferenceError::InitFailed {
        attempts: MAX_INIT_ATTEMPTS,
    })
}

/// Runs one chain seeded with `seed`, optionally from a given starting point.
pub fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    cfg: &SamplerConfig,
    seed: u64,
    init: Option<&[f64]>,
) -> Result<PosteriorChain, InferenceError> {
    cfg.validate()?;
    let dim = target.dim();
    let user_blocks = target.blocks();
    if !cfg.initial_step_scales.is_empty() && cfg.initial_step_scales.len() != user_blocks.len() {
        return Err(InferenceError::Config(format!(
            "{} step scales for {} blocks",
            cfg.initial_step_scales.len(),
            user_blocks.len()
        )));
    }
    let n_user = user_blocks.len();
    let mut blocks: Vec<BlockKernel> = user_blocks
        .into_iter()
        .enumerate()
        .map(|(k, r)| BlockKernel::new(r, cfg.initial_step_scales.get(k).copied().unwrap_or(0.1)))
        .collect();

    let mut rng = rng_from_seed(seed);
    let mut state = initialise(target, init, &mut rng)?;

    // warmup: Robbins–Monro on log step sizes, restarted after each reshape
    let w = cfg.n_warmup;
    let reshape_at = [w / 2, 3 * w / 4];
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut since_reset = 0usize;
    for it in 0..w {
        if it > 0 && reshape_at.contains(&it) {
            reshape_kernel(&mut blocks, n_user, dim, &history);
            history.clear();
            since_reset = 0;
        }
        for _ in 0..cfg.thin {
            since_reset += 1;
            let gain = (since_reset as f64).powf(-0.6);
            sweep(target, &mut blocks, &mut state, &mut rng, Some((gain, cfg.adapt_target)));
        }
        if it >= w / 4 {
            history.push(state.x.clone());
        }
    }

    for b in &mut blocks {
        b.accepted = 0;
        b.proposed = 0;
    }
    let checksum = kernel_checksum(&blocks);
    let mut draws = Vec::with_capacity(cfg.n_samples);
    let mut log_densities = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        for _ in 0..cfg.thin {
            sweep(target, &mut blocks, &mut state, &mut rng, None);
        }
        draws.push(state.x.clone());
        log_densities.push(state.lp);
    }
    assert_eq!(checksum, kernel_checksum(&blocks), "proposal kernel changed after warmup");

    let (acc, prop) = blocks
        .iter()
        .fold((0u64, 0u64), |(a, p), b| (a + b.accepted, p + b.proposed));
    Ok(PosteriorChain {
        id: 0,
        seed,
        draws,
        log_densities,
        acceptance_rate: acc as f64 / prop.max(1) as f64,
        block_acceptance: blocks
            .iter()
            .map(|b| b.accepted as f64 / b.proposed.max(1) as f64)
            .collect(),
        kernel_checksum: checksum,
    })
}

/// Result of a multi-chain fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Successful chains in id order.
    pub chains: Vec<PosteriorChain>,
    /// Chains that failed to initialise, with the reason.
    pub failures: Vec<(usize, String)>,
    /// Index into `chains` of the selected chain.
    pub best: usize,
    /// Median log-density of the selected chain minus that of the runner-up.
    pub gap: Option<f64>,
}

impl FitResult {
    pub fn best_chain(&self) -> &PosteriorChain {
        &self.chains[self.best]
    }
}

/// Index of the chain with the highest median log-density and its margin over
/// the runner-up. Ties go to the lower index.
pub fn select_best(chains: &[PosteriorChain]) -> Option<(usize, Option<f64>)> {
    let medians: Vec<f64> = chains.iter().map(PosteriorChain::median_log_density).collect();
    let best = (0..medians.len()).fold(None, |acc: Option<usize>, i| match acc {
        Some(b) if medians[b] >= medians[i] => Some(b),
        _ => Some(i),
    })?;
    let runner_up = (0..medians.len())
        .filter(|&i| i != best)
        .map(|i| medians[i])
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    Some((best, runner_up.map(|r| medians[best] - r)))
}

/// `n_chains` chains with seeds split from `cfg.seed`, run concurrently.
pub fn fit<T: LogDensity + ?Sized>(target: &T, cfg: &SamplerConfig) -> Result<FitResult, InferenceError> {
    fit_with_inits(target, cfg, &vec![None; cfg.n_chains])
}

/// As [`fit`], with an optional starting point per chain.
pub fn fit_with_inits<T: LogDensity + ?Sized>(
    target: &T,
    cfg: &SamplerConfig,
    inits: &[Option<Vec<f64>>],
) -> Result<FitResult, InferenceError> {
    cfg.validate()?;
    if inits.len() != cfg.n_chains {
        return Err(InferenceError::Config(format!(
            "{} initial points for {} chains",
            inits.len(),
            cfg.n_chains
        )));
    }
    let results: Vec<Result<PosteriorChain, InferenceError>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|k| {
            let seed = split_seed(cfg.seed, k as u64);
            let mut chain = run_chain(target, cfg, seed, inits[k].as_deref())?;
            chain.id = k;
            Ok(chain)
        })
        .collect();
    let mut chains = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(c) => chains.push(c),
            Err(e) => {
                log::warn!("chain {k} failed: {e}");
                failures.push((k, e.to_string()));
            }
        }
    }
    let Some((best, gap)) = select_best(&chains) else {
        let reasons: Vec<String> = failures.iter().map(|(k, e)| format!("chain {k}: {e}")).collect();
        return Err(InferenceError::AllChainsFailed(reasons.join("; ")));
    };
    Ok(FitResult {
        chains,
        failures,
        best,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct StdNormal(usize);

    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        }
        fn blocks(&self) -> Vec<Range<usize>> {
            (0..self.0).map(|i| i..i + 1).collect()
        }
    }

    /// Banana: x0 ~ N(0, 1), x1 | x0 ~ N(b (x0² - 1), 1).
    struct Banana(f64);

    impl LogDensity for Banana {
        fn dim(&self) -> usize {
            2
        }
        fn log_density(&self, x: &[f64]) -> f64 {
            let m = self.0 * (x[0] * x[0] - 1.0);
            -0.5 * x[0] * x[0] - 0.5 * (x[1] - m) * (x[1] - m)
        }
    }

    struct Nowhere;

    impl LogDensity for Nowhere {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, _: &[f64]) -> f64 {
            f64::NEG_INFINITY
        }
    }

    fn column(chain: &PosteriorChain, i: usize) -> Vec<f64> {
        chain.draws.iter().map(|x| x[i]).collect()
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
    }

    fn cfg(warmup: usize, samples: usize, thin: usize) -> SamplerConfig {
        SamplerConfig {
            n_chains: 1,
            n_warmup: warmup,
            n_samples: samples,
            thin,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn standard_normal_moments() {
        let chain = run_chain(&StdNormal(2), &cfg(2000, 20000, 1), 7, None).unwrap();
        for i in 0..2 {
            let xs = column(&chain, i);
            let ess = effective_sample_size(&xs);
            assert!(ess >= 1000.0, "ess {ess}");
            let (m, v) = mean_var(&xs);
            assert!(m.abs() < 4.0 / ess.sqrt(), "mean {m}, ess {ess}");
            assert!((v - 1.0).abs() < 0.1, "variance {v}");
        }
    }

    #[test]
    fn banana_quantiles() {
        let chain = run_chain(&Banana(0.5), &cfg(4000, 40000, 2), 3, None).unwrap();
        let x0 = column(&chain, 0);
        let x1 = column(&chain, 1);
        let ess = effective_sample_size(&x1).min(effective_sample_size(&x0));
        assert!(ess > 500.0, "ess {ess}");
        let (m0, v0) = mean_var(&x0);
        let (m1, v1) = mean_var(&x1);
        // E x1 = 0, Var x1 = 1 + 2 b²
        assert!(m0.abs() < 4.0 / ess.sqrt());
        assert!(m1.abs() < 4.0 * 1.5f64.sqrt() / ess.sqrt(), "m1 {m1}");
        assert!((v0 - 1.0).abs() < 0.15, "v0 {v0}");
        assert!((v1 - 1.5).abs() < 0.25, "v1 {v1}");
        let med = percentile(&x0, 0.5);
        assert!(med.abs() < 5.0 / ess.sqrt());
        let q975 = percentile(&x0, 0.975);
        assert!((q975 - 1.959964).abs() < 0.15, "q975 {q975}");
    }

    #[test]
    fn seeded_chains_are_identical() {
        let c = cfg(300, 300, 1);
        let a = run_chain(&StdNormal(3), &c, 11, None).unwrap();
        let b = run_chain(&StdNormal(3), &c, 11, None).unwrap();
        assert_eq!(a, b);
        let other = run_chain(&StdNormal(3), &c, 12, None).unwrap();
        assert_ne!(a.draws, other.draws);
    }

    #[test]
    fn acceptance_adapts_to_target() {
        for target in [0.25, 0.45] {
            let c = SamplerConfig {
                adapt_target: target,
                ..cfg(3000, 5000, 1)
            };
            let chain = run_chain(&Banana(0.3), &c, 5, None).unwrap();
            assert!((chain.acceptance_rate - target).abs() < 0.1, "{}", chain.acceptance_rate);
        }
    }

    #[test]
    fn initialisation_failure_after_retries() {
        let err = run_chain(&Nowhere, &cfg(10, 10, 1), 1, None).unwrap_err();
        assert!(matches!(err, InferenceError::InitFailed { attempts: MAX_INIT_ATTEMPTS }));
        let all = fit(&Nowhere, &SamplerConfig { n_chains: 2, ..cfg(10, 10, 1) });
        assert!(matches!(all, Err(InferenceError::AllChainsFailed(_))));
    }

    #[test]
    fn explicit_initial_point_is_used() {
        let chain = run_chain(&StdNormal(1), &cfg(1, 1, 1), 1, Some(&[0.0])).unwrap();
        assert_eq!(chain.draws.len(), 1);
        assert!(run_chain(&StdNormal(1), &cfg(1, 1, 1), 1, Some(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        for bad in [
            SamplerConfig { n_chains: 0, ..Default::default() },
            SamplerConfig { n_samples: 0, ..Default::default() },
            SamplerConfig { adapt_target: 0.95, ..Default::default() },
            SamplerConfig { initial_step_scales: vec![-1.0], ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
        let c = SamplerConfig { initial_step_scales: vec![0.1], ..cfg(10, 10, 1) };
        assert!(run_chain(&StdNormal(2), &c, 1, None).is_err());
    }

    fn stub_chain(id: usize, lds: Vec<f64>) -> PosteriorChain {
        PosteriorChain {
            id,
            seed: 0,
            draws: vec![vec![]; lds.len()],
            log_densities: lds,
            acceptance_rate: 0.3,
            block_acceptance: vec![],
            kernel_checksum: 0,
        }
    }

    #[test]
    fn selection_by_median_density() {
        let chains = vec![stub_chain(0, vec![-10.0; 5]), stub_chain(1, vec![-5.0; 5])];
        assert_eq!(select_best(&chains), Some((1, Some(5.0))));
        assert_eq!(select_best(&chains[..1]), Some((0, None)));
        assert_eq!(select_best(&[]), None);
        // the median, not the maximum, decides
        let chains = vec![
            stub_chain(0, vec![-9.0, -9.0, 100.0]),
            stub_chain(1, vec![-8.0, -8.0, -8.0]),
        ];
        assert_eq!(select_best(&chains).unwrap().0, 1);
    }

    #[test]
    fn fit_is_schedule_independent() {
        let c = SamplerConfig { n_chains: 4, ..cfg(200, 200, 1) };
        let a = fit(&StdNormal(2), &c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| fit(&StdNormal(2), &c).unwrap());
        assert_eq!(a.chains, b.chains);
        assert_eq!(a.best, b.best);
        let seeds: std::collections::HashSet<u64> = a.chains.iter().map(|c| c.seed).collect();
        assert_eq!(seeds.len(), 4);
    }
}
