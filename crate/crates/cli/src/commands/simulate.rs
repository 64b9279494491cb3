use std::path::Path;

use aggnet::simulate::{aggregate, simulate_network};
use aggnet::KernelParams;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io;

pub const EDGES: &str = "edges.txt";
pub const LABELS: &str = "labels.txt";
pub const AGGREGATE: &str = "aggregate.csv";
pub const SIZES: &str = "sizes.csv";
pub const TRUTH: &str = "truth.toml";

pub fn run(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut truth = cfg
        .truth
        .clone()
        .ok_or_else(|| CliError::Config("simulate needs a [truth] section".into()))?;
    if let Some(s) = seed {
        truth.seed = s;
    }
    let q = cfg.model.q;
    let groups = truth.group_config(q)?;
    let kp = KernelParams::new(truth.theta, q).map_err(|e| CliError::Config(e.to_string()))?;
    let kind = cfg.model.kind();
    let net = simulate_network(&groups, &kp, kind, truth.seed);
    let y = aggregate(&net).map_err(|e| CliError::Runtime(e.to_string()))?;
    log::info!(
        "simulated {} nodes in {} groups, {} edges",
        net.n_nodes(),
        net.n_groups,
        net.edge_total()
    );

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    io::write_with(&out.join(EDGES), |w| net.write_edge_list(w))?;
    io::write_with(&out.join(LABELS), |w| net.write_labels(w))?;
    io::write_with(&out.join(AGGREGATE), |w| io::write_aggregate(w, y.counts()))?;
    io::write_with(&out.join(SIZES), |w| io::write_sizes(w, &truth.sizes))?;
    io::write_toml(&out.join(TRUTH), &truth)?;
    Ok(())
}
