//! Bayesian model over aggregate data: priors, the sampling-space
//! parameterisation and the unnormalised log-posterior.
//!
//! Sampling coordinates:
//!
//! * `gamma` (`r × q`) with `gamma[a][s] = 0` for `a <= s`, plus a translation
//!   `nu`, so that `mu = gamma + nu`. The zeros pin the global rotation.
//! * `eta_g = (1 + 2 sigma_g²)^{-q/2}` in `(0, 1)`, the fraction of the maximal
//!   within-group edge density that group `g` can realise.
//! * `log_tau` and `logit_theta`.
//!
//! Priors: `mu ~ Normal(0, tau²)` elementwise, half-Cauchy on every `sigma_g`
//! and on `tau`, uniform on `theta`, flat on `nu`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::kernel::{KernelError, KernelParams};
use crate::likelihood::{approximate_log_likelihood, AggregateMatrix, LikelihoodError};
use crate::moments::{GroupConfig, MomentsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("eta must lie in the open interval (0, 1), got {0}")]
    EtaOutOfRange(f64),
    #[error("{groups} groups cannot pin the rotations of a {dim}-dimensional latent space")]
    TooFewGroups { groups: usize, dim: usize },
    #[error("parameter shapes disagree: {0}")]
    Shape(String),
    #[error("gamma[{row}][{col}] = {value} must be zero")]
    StructuralZero { row: usize, col: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Moments(#[from] MomentsError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Half-Cauchy scales for the group scales `sigma` and the population scale `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    pub cauchy_scale_sigma: f64,
    pub cauchy_scale_tau: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            cauchy_scale_sigma: 1.0,
            cauchy_scale_tau: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn new(cauchy_scale_sigma: f64, cauchy_scale_tau: f64) -> Result<Self, ModelError> {
        for s in [cauchy_scale_sigma, cauchy_scale_tau] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ModelError::Invalid(format!("half-Cauchy scale {s}")));
            }
        }
        Ok(Self {
            cauchy_scale_sigma,
            cauchy_scale_tau,
        })
    }
}

/// Parameters in their natural space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Group centres, `r × q`.
    pub mu: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub tau: f64,
    pub theta: f64,
}

impl ModelParams {
    pub fn n_groups(&self) -> usize {
        self.mu.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mu.ncols()
    }

    pub fn group_config(&self, sizes: &[usize]) -> Result<GroupConfig, ModelError> {
        Ok(GroupConfig::new(
            sizes.to_vec(),
            self.mu.clone(),
            self.sigma.clone(),
        )?)
    }

    pub fn kernel_params(&self) -> Result<KernelParams, ModelError> {
        Ok(KernelParams::new(self.theta, self.dim())?)
    }
}

/// Parameters in sampling space.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedParams {
    pub gamma: DMatrix<f64>,
    pub nu: Vec<f64>,
    pub eta: Vec<f64>,
    pub log_tau: f64,
    pub logit_theta: f64,
}

impl UnconstrainedParams {
    pub fn n_groups(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn dim(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let (r, q) = self.gamma.shape();
        if r < q {
            return Err(ModelError::TooFewGroups { groups: r, dim: q });
        }
        if self.nu.len() != q || self.eta.len() != r {
            return Err(ModelError::Shape(format!(
                "gamma {r}x{q}, nu {}, eta {}",
                self.nu.len(),
                self.eta.len()
            )));
        }
        for row in 0..q {
            for col in row..q {
                let value = self.gamma[(row, col)];
                if value != 0.0 {
                    return Err(ModelError::StructuralZero { row, col, value });
                }
            }
        }
        if let Some(&e) = self.eta.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
            return Err(ModelError::EtaOutOfRange(e));
        }
        Ok(())
    }
}

/// Mapping between [`UnconstrainedParams`] and a flat sampling vector.
///
/// Layout: free `gamma` entries row by row, then `nu`, `eta`, `log_tau`,
/// `logit_theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub groups: usize,
    pub dim: usize,
}

impl ParamLayout {
    pub fn new(groups: usize, dim: usize) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::Invalid("latent dimension must be positive".into()));
        }
        if groups < dim {
            return Err(ModelError::TooFewGroups { groups, dim });
        }
        Ok(Self { groups, dim })
    }

    fn free_in_row(&self, row: usize) -> usize {
        row.min(self.dim)
    }

    pub fn n_gamma(&self) -> usize {
        self.groups * self.dim - self.dim * (self.dim + 1) / 2
    }

    pub fn len(&self) -> usize {
        self.n_gamma() + self.dim + self.groups + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nu_offset(&self) -> usize {
        self.n_gamma()
    }

    pub fn eta_offset(&self) -> usize {
        self.n_gamma() + self.dim
    }

    pub fn log_tau_index(&self) -> usize {
        self.eta_offset() + self.groups
    }

    pub fn logit_theta_index(&self) -> usize {
        self.log_tau_index() + 1
    }

    /// Sampler blocks: each `gamma` row with free entries, `nu`, `eta`,
    /// `log_tau`, `logit_theta`.
    pub fn blocks(&self) -> Vec<std::ops::Range<usize>> {
        let mut blocks = Vec::new();
        let mut start = 0;
        for row in 1..self.groups {
            let len = self.free_in_row(row);
            blocks.push(start..start + len);
            start += len;
        }
        blocks.push(self.nu_offset()..self.eta_offset());
        blocks.push(self.eta_offset()..self.log_tau_index());
        blocks.push(self.log_tau_index()..self.log_tau_index() + 1);
        blocks.push(self.logit_theta_index()..self.logit_theta_index() + 1);
        blocks
    }

    pub fn pack(&self, u: &UnconstrainedParams) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        for row in 1..self.groups {
            for col in 0..self.free_in_row(row) {
                x.push(u.gamma[(row, col)]);
            }
        }
        x.extend_from_slice(&u.nu);
        x.extend_from_slice(&u.eta);
        x.push(u.log_tau);
        x.push(u.logit_theta);
        x
    }

    pub fn unpack(&self, x: &[f64]) -> UnconstrainedParams {
        assert_eq!(x.len(), self.len(), "sampling vector has the wrong length");
        let mut gamma = DMatrix::zeros(self.groups, self.dim);
        let mut k = 0;
        for row in 1..self.groups {
            for col in 0..self.free_in_row(row) {
                gamma[(row, col)] = x[k];
                k += 1;
            }
        }
        UnconstrainedParams {
            gamma,
            nu: x[self.nu_offset()..self.eta_offset()].to_vec(),
            eta: x[self.eta_offset()..self.log_tau_index()].to_vec(),
            log_tau: x[self.log_tau_index()],
            logit_theta: x[self.logit_theta_index()],
        }
    }
}

fn check_eta(eta: f64) -> Result<(), ModelError> {
    if eta > 0.0 && eta < 1.0 {
        Ok(())
    } else {
        Err(ModelError::EtaOutOfRange(eta))
    }
}

/// `sigma(eta) = sqrt((eta^{-2/q} - 1) / 2)`.
pub fn sigma_from_eta(eta: f64, q: usize) -> Result<f64, ModelError> {
    check_eta(eta)?;
    Ok((0.5 * (-2.0 / q as f64 * eta.ln()).exp_m1()).sqrt())
}

/// `eta(sigma) = (1 + 2 sigma²)^{-q/2}`.
pub fn eta_from_sigma(sigma: f64, q: usize) -> f64 {
    (-(q as f64) / 2.0 * (2.0 * sigma * sigma).ln_1p()).exp()
}

/// `ln |d sigma / d eta| = ln(eta^{-2/q - 1} / (2 q sigma))`.
pub fn log_jacobian_eta(eta: f64, q: usize) -> Result<f64, ModelError> {
    let sigma = sigma_from_eta(eta, q)?;
    let qf = q as f64;
    Ok((-2.0 / qf - 1.0) * eta.ln() - (2.0 * qf).ln() - sigma.ln())
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln logistic(x)` without overflow.
fn ln_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn ln_half_cauchy(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = x / scale;
    (2.0 / (PI * scale)).ln() - z.mul_add(z, 1.0).ln()
}

pub fn ln_normal(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * z * z
}

pub fn to_natural(u: &UnconstrainedParams, q: usize) -> Result<ModelParams, ModelError> {
    if u.dim() != q {
        return Err(ModelError::Shape(format!(
            "gamma has {} columns, expected q = {q}",
            u.dim()
        )));
    }
    u.validate()?;
    let mut mu = u.gamma.clone();
    for (s, nu) in u.nu.iter().enumerate() {
        mu.column_mut(s).add_scalar_mut(*nu);
    }
    let sigma = u
        .eta
        .iter()
        .map(|&e| sigma_from_eta(e, q))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelParams {
        mu,
        sigma,
        tau: u.log_tau.exp(),
        theta: logistic(u.logit_theta),
    })
}

/// Canonical sampling-space representative of `p`.
///
/// Centres are first rotated about the origin so that the structural zeros of
/// `gamma` hold; the prior and likelihood are unchanged by that rotation, and
/// centres already in canonical form are returned as they are.
pub fn to_unconstrained(p: &ModelParams) -> Result<UnconstrainedParams, ModelError> {
    let (r, q) = p.mu.shape();
    if r < q {
        return Err(ModelError::TooFewGroups { groups: r, dim: q });
    }
    if p.sigma.len() != r {
        return Err(ModelError::Shape(format!("{} scales for {r} groups", p.sigma.len())));
    }
    if !(p.tau > 0.0 && p.tau.is_finite()) {
        return Err(ModelError::Invalid(format!("tau = {}", p.tau)));
    }
    if !(p.theta > 0.0 && p.theta < 1.0) {
        return Err(ModelError::Invalid(format!("theta = {} has no logit", p.theta)));
    }
    if let Some(s) = p.sigma.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        return Err(ModelError::Invalid(format!("sigma = {s}")));
    }

    let rotation = canonical_rotation(&p.mu);
    let rotated = &p.mu * rotation.transpose();
    let nu: Vec<f64> = rotated.row(0).iter().copied().collect();
    let mut gamma = rotated;
    for (s, v) in nu.iter().enumerate() {
        gamma.column_mut(s).add_scalar_mut(-v);
    }
    for row in 0..q {
        for col in row..q {
            gamma[(row, col)] = 0.0;
        }
    }
    let eta = p
        .sigma
        .iter()
        .map(|&s| eta_from_sigma(s, q))
        .collect::<Vec<_>>();
    if let Some(&e) = eta.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
        return Err(ModelError::EtaOutOfRange(e));
    }
    Ok(UnconstrainedParams {
        gamma,
        nu,
        eta,
        log_tau: p.tau.ln(),
        logit_theta: logit(p.theta),
    })
}

/// Rotation `R` (det +1) such that the rows of `(mu - mu_0) Rᵀ` satisfy the
/// zero pattern of `gamma`. Identity when `mu` is already canonical.
fn canonical_rotation(mu: &DMatrix<f64>) -> DMatrix<f64> {
    let q = mu.ncols();
    if q == 1 || already_canonical(mu) {
        return DMatrix::identity(q, q);
    }
    // columns: offsets of rows 1..q-1 from row 0; the last column stays zero
    let mut m = DMatrix::zeros(q, q);
    for a in 1..q {
        for s in 0..q {
            m[(s, a - 1)] = mu[(a, s)] - mu[(0, s)];
        }
    }
    let qr = m.qr();
    let mut basis = qr.q();
    let upper = qr.r();
    // make the leading coordinate of each pinned row non-negative
    for k in 0..q - 1 {
        if upper[(k, k)] < 0.0 {
            basis.column_mut(k).neg_mut();
        }
    }
    if basis.determinant() < 0.0 {
        basis.column_mut(q - 1).neg_mut();
    }
    basis.transpose()
}

fn already_canonical(mu: &DMatrix<f64>) -> bool {
    let q = mu.ncols();
    (1..q).all(|a| (a..q).all(|s| mu[(a, s)] == mu[(0, s)]))
}

/// Log-prior density in sampling space (Jacobians for `eta`, `log_tau` and
/// `logit_theta` included).
pub fn log_prior(p: &ModelParams, u: &UnconstrainedParams, pc: &PriorConfig) -> f64 {
    let q = p.dim();
    let population: f64 = p.mu.iter().map(|&m| ln_normal(m, 0.0, p.tau)).sum();
    let scales: f64 = p
        .sigma
        .iter()
        .zip(&u.eta)
        .map(|(&s, &e)| {
            ln_half_cauchy(s, pc.cauchy_scale_sigma)
                + log_jacobian_eta(e, q).unwrap_or(f64::NEG_INFINITY)
        })
        .sum();
    let tau = ln_half_cauchy(p.tau, pc.cauchy_scale_tau) + u.log_tau;
    // uniform theta on [0, 1]: only the logit Jacobian remains
    let theta = ln_logistic(u.logit_theta) + ln_logistic(-u.logit_theta);
    population + scales + tau + theta
}

/// Approximate log-likelihood of `y` at natural parameters `p`.
pub fn log_likelihood(p: &ModelParams, y: &AggregateMatrix) -> Result<f64, ModelError> {
    let cfg = p.group_config(y.sizes())?;
    let kp = p.kernel_params()?;
    Ok(approximate_log_likelihood(y, &cfg, &kp)?)
}

/// Unnormalised log-posterior in sampling space.
pub fn log_posterior(
    u: &UnconstrainedParams,
    y: &AggregateMatrix,
    pc: &PriorConfig,
) -> Result<f64, ModelError> {
    if u.n_groups() != y.n_groups() {
        return Err(ModelError::Shape(format!(
            "{} groups in parameters, {} in data",
            u.n_groups(),
            y.n_groups()
        )));
    }
    let p = to_natural(u, u.dim())?;
    let ll = log_likelihood(&p, y)?;
    Ok(ll + log_prior(&p, u, pc))
}

/// Data, latent dimension and prior bundled as a density over flat sampling
/// vectors.
#[derive(Debug, Clone)]
pub struct PosteriorModel {
    data: AggregateMatrix,
    prior: PriorConfig,
    layout: ParamLayout,
}

impl PosteriorModel {
    pub fn new(data: AggregateMatrix, q: usize, prior: PriorConfig) -> Result<Self, ModelError> {
        data.check_trials()?;
        let layout = ParamLayout::new(data.n_groups(), q)?;
        Ok(Self {
            data,
            prior,
            layout,
        })
    }

    pub fn data(&self) -> &AggregateMatrix {
        &self.data
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    /// Log-posterior at a flat sampling vector; `-∞` outside the support.
    pub fn log_density_flat(&self, x: &[f64]) -> f64 {
        let u = self.layout.unpack(x);
        match log_posterior(&u, &self.data, &self.prior) {
            Ok(v) if !v.is_nan() => v,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn natural(&self, x: &[f64]) -> Result<ModelParams, ModelError> {
        to_natural(&self.layout.unpack(x), self.layout.dim)
    }
}
