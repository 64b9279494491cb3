use std::io::Write;
use std::path::{Path, PathBuf};

use aggnet::inference::{self, write_draws, AlignedPosterior, PosteriorSummary};
use aggnet::model::{ModelParams, PosteriorModel};
use aggnet::AggregateMatrix;

use super::simulate::TRUTH;
use crate::config::{RunConfig, TruthSection};
use crate::error::{CliError, Result};
use crate::io::{self, FitMeta, SelectionRow};

pub const SELECTION: &str = "selection.csv";
pub const ALIGNED: &str = "aligned.csv";
pub const SUMMARY: &str = "summary.csv";
pub const MAP: &str = "map.csv";
pub const META: &str = "fit_meta.toml";

pub fn chain_file(k: usize) -> String {
    format!("chain_{k}.csv")
}

/// Command-line overrides of the config.
#[derive(Debug, Clone, Default)]
pub struct FitArgs {
    pub aggregate: Option<PathBuf>,
    pub sizes: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub seed: Option<u64>,
    pub chains: Option<usize>,
}

struct Inputs {
    data: AggregateMatrix,
    truth: Option<TruthSection>,
}

/// Loads the inputs and collects every inconsistency before giving up.
fn load_inputs(cfg: &RunConfig, aggregate_path: &Path, sizes_path: &Path, truth_path: Option<&Path>) -> Result<Inputs> {
    let counts = io::read_aggregate(aggregate_path)?;
    let sizes = io::read_sizes(sizes_path)?;
    let truth: Option<TruthSection> = truth_path.map(io::read_toml).transpose()?;
    let kind = cfg.model.kind();
    let r = counts.nrows();
    let mut problems = Vec::new();
    if sizes.len() != r {
        problems.push(format!(
            "{} has {r} groups but {} lists {}",
            aggregate_path.display(),
            sizes_path.display(),
            sizes.len()
        ));
    }
    if let Some(g) = sizes.iter().position(|&n| n == 0) {
        problems.push(format!("group {g} has size 0"));
    }
    if !kind.directed {
        for a in 0..r {
            for b in a + 1..r {
                if counts[(a, b)] != counts[(b, a)] {
                    problems.push(format!(
                        "undirected counts are not symmetric: Y[{a},{b}] = {} but Y[{b},{a}] = {}",
                        counts[(a, b)],
                        counts[(b, a)]
                    ));
                }
            }
        }
    }
    if let Some(t) = &truth {
        if t.sizes != sizes {
            problems.push(format!("truth sizes {:?} differ from {:?}", t.sizes, sizes));
        }
        if t.centres.iter().any(|c| c.len() != cfg.model.q) {
            problems.push(format!("truth centres do not have q = {} coordinates", cfg.model.q));
        }
    }
    if problems.is_empty() {
        let data = AggregateMatrix::new(counts, kind, sizes).map_err(|e| CliError::Validation(e.to_string()))?;
        if let Err(e) = data.check_trials() {
            problems.push(e.to_string());
        } else {
            return Ok(Inputs { data, truth });
        }
    }
    Err(CliError::Validation(problems.join("; ")))
}

fn write_summary<W: Write>(mut w: W, s: &PosteriorSummary, map: &ModelParams) -> std::io::Result<()> {
    let (r, q) = map.mu.shape();
    let map_values: Vec<f64> = (0..r)
        .flat_map(|g| (0..q).map(move |d| (g, d)))
        .map(|(g, d)| map.mu[(g, d)])
        .chain(map.sigma.iter().copied())
        .chain([map.tau, map.theta])
        .collect();
    writeln!(w, "name,mean,median,lower,upper,map")?;
    for (p, m) in s.params.iter().zip(map_values) {
        writeln!(w, "{},{},{},{},{},{}", p.name, p.mean, p.median, p.lower, p.upper, m)?;
    }
    Ok(())
}

fn write_map<W: Write>(mut w: W, s: &PosteriorSummary) -> std::io::Result<()> {
    let q = s.map_centres.ncols();
    write!(w, "group")?;
    for d in 0..q {
        write!(w, ",x_{d}")?;
    }
    writeln!(w, ",radius")?;
    for (g, radius) in s.radii.iter().enumerate() {
        write!(w, "{g}")?;
        for d in 0..q {
            write!(w, ",{}", s.map_centres[(g, d)])?;
        }
        writeln!(w, ",{radius}")?;
    }
    Ok(())
}

/// Draws of the aligned posterior as natural parameters.
pub fn aligned_params(a: &AlignedPosterior) -> Vec<ModelParams> {
    (0..a.len())
        .map(|i| ModelParams {
            mu: a.centres[i].clone(),
            sigma: a.sigma[i].clone(),
            tau: a.tau[i],
            theta: a.theta[i],
        })
        .collect()
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn run(cfg: &RunConfig, out: &Path, args: &FitArgs) -> Result<()> {
    let missing = |what: &str| CliError::Config(format!("no {what} file given (set [data] or pass --{what})"));
    let aggregate_path = args
        .aggregate
        .clone()
        .or_else(|| cfg.data.aggregate.clone())
        .ok_or_else(|| missing("aggregate"))?;
    let sizes_path = args.sizes.clone().or_else(|| cfg.data.sizes.clone()).ok_or_else(|| missing("sizes"))?;
    let truth_path = args.truth.clone().or_else(|| cfg.data.truth.clone());

    let mut sampler = cfg.sampler.clone();
    if let Some(s) = args.seed {
        sampler.seed = s;
    }
    if let Some(c) = args.chains {
        sampler.chains = c;
    }
    let sampler = sampler.to_config()?;
    let prior = cfg.model.prior()?;

    let inputs = load_inputs(cfg, &aggregate_path, &sizes_path, truth_path.as_deref())?;
    let edge_density = inputs.data.edge_density();
    let sizes = inputs.data.sizes().to_vec();
    let model = PosteriorModel::new(inputs.data, cfg.model.q, prior).map_err(|e| CliError::Validation(e.to_string()))?;
    log::info!(
        "fitting {} groups in q = {} with {} chains of {} + {} draws",
        sizes.len(),
        cfg.model.q,
        sampler.n_chains,
        sampler.n_warmup,
        sampler.n_samples
    );
    let result = inference::fit(&model, &sampler).map_err(runtime)?;
    let best = result.best_chain();
    log::info!("selected chain {} (gap {:?})", best.id, result.gap);

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for chain in &result.chains {
        let params = chain
            .draws
            .iter()
            .map(|x| model.natural(x))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(runtime)?;
        let path = out.join(chain_file(chain.id));
        let mut w = io::create(&path)?;
        write_draws(&mut w, chain.id, &params, &chain.log_densities).map_err(runtime)?;
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    let rows: Vec<SelectionRow> = result
        .chains
        .iter()
        .map(|c| SelectionRow {
            chain: c.id,
            median_log_density: c.median_log_density(),
            acceptance_rate: c.acceptance_rate,
            selected: c.id == best.id,
        })
        .collect();
    let path = out.join(SELECTION);
    io::write_selection(io::create(&path)?, &rows).map_err(|e| CliError::format(&path, e.to_string()))?;

    let aligned = AlignedPosterior::from_chain(&model, best).map_err(runtime)?;
    let summary = inference::summarize(&aligned).map_err(runtime)?;
    let params = aligned_params(&aligned);
    let path = out.join(ALIGNED);
    let mut w = io::create(&path)?;
    write_draws(&mut w, best.id, &params, &aligned.log_densities).map_err(runtime)?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    let map = &params[aligned.reference_index];
    io::write_with(&out.join(SUMMARY), |w| write_summary(w, &summary, map))?;
    io::write_with(&out.join(MAP), |w| write_map(w, &summary))?;

    let meta = FitMeta {
        q: cfg.model.q,
        directed: cfg.model.directed,
        weighted: cfg.model.weighted,
        sizes,
        edge_density,
        seed: sampler.seed,
        chains: sampler.n_chains,
        samples: sampler.n_samples,
        selected_chain: best.id,
        gap: result.gap,
        failed_chains: result.failures.iter().map(|(k, _)| *k).collect(),
    };
    io::write_toml(&out.join(META), &meta)?;
    if let Some(t) = &inputs.truth {
        io::write_toml(&out.join(TRUTH), t)?;
    }
    Ok(())
}

