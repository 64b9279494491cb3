//! Run configuration, read from a TOML file.
//!
//! Paths in `[data]` are relative to the directory holding the config file.

use std::path::{Path, PathBuf};

use aggnet::inference::SamplerConfig;
use aggnet::{GroupConfig, NetworkKind, PriorConfig};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSection,
    pub truth: Option<TruthSection>,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub q: usize,
    pub directed: bool,
    pub weighted: bool,
    pub cauchy_scale_sigma: f64,
    pub cauchy_scale_tau: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let prior = PriorConfig::default();
        Self {
            q: 2,
            directed: true,
            weighted: false,
            cauchy_scale_sigma: prior.cauchy_scale_sigma,
            cauchy_scale_tau: prior.cauchy_scale_tau,
        }
    }
}

impl ModelSection {
    pub fn kind(&self) -> NetworkKind {
        NetworkKind {
            directed: self.directed,
            weighted: self.weighted,
        }
    }

    pub fn prior(&self) -> Result<PriorConfig> {
        PriorConfig::new(self.cauchy_scale_sigma, self.cauchy_scale_tau).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Ground-truth parameters for `simulate`; also the format of `truth.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    pub theta: f64,
    /// Recorded for reference; centres are given explicitly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub sizes: Vec<usize>,
    /// One row of length `q` per group.
    pub centres: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl TruthSection {
    pub fn centre_matrix(&self, q: usize) -> Result<DMatrix<f64>> {
        if let Some((g, row)) = self.centres.iter().enumerate().find(|(_, row)| row.len() != q) {
            return Err(CliError::Config(format!(
                "centre of group {g} has {} coordinates, q = {q}",
                row.len()
            )));
        }
        Ok(DMatrix::from_fn(self.centres.len(), q, |g, s| self.centres[g][s]))
    }

    pub fn group_config(&self, q: usize) -> Result<GroupConfig> {
        GroupConfig::new(self.sizes.clone(), self.centre_matrix(q)?, self.scales.clone())
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_target: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            chains: d.n_chains,
            warmup: d.n_warmup,
            samples: d.n_samples,
            thin: d.thin,
            seed: d.seed,
            adapt_target: d.adapt_target,
        }
    }
}

impl SamplerSection {
    pub fn to_config(&self) -> Result<SamplerConfig> {
        let cfg = SamplerConfig {
            n_chains: self.chains,
            n_warmup: self.warmup,
            n_samples: self.samples,
            thin: self.thin,
            seed: self.seed,
            initial_step_scales: Vec::new(),
            adapt_target: self.adapt_target,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub aggregate: Option<PathBuf>,
    pub sizes: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads the file and resolves `[data]` paths against its directory.
    /// With `require_data` every given data path must exist.
    pub fn load(path: &Path, require_data: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.aggregate, &mut cfg.data.sizes, &mut cfg.data.truth]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if require_data && !p.exists() {
                return Err(CliError::Config(format!("data file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.model.q == 0 {
            return Err(CliError::Config("model.q must be at least 1".into()));
        }
        if self.sampler.chains == 0 {
            return Err(CliError::Config("sampler.chains must be at least 1".into()));
        }
        self.model.prior()?;
        if let Some(t) = &self.truth {
            let r = t.sizes.len();
            if t.centres.len() != r || t.scales.len() != r {
                return Err(CliError::Config(format!(
                    "truth has {r} sizes, {} centres and {} scales",
                    t.centres.len(),
                    t.scales.len()
                )));
            }
            if !(0.0..=1.0).contains(&t.theta) {
                return Err(CliError::Config(format!("truth.theta = {} is outside [0, 1]", t.theta)));
            }
            t.group_config(self.model.q)?;
        }
        Ok(())
    }
}
