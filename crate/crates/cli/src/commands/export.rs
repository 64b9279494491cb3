//! Plot-ready tables from a fit directory.

use std::io::Write;
use std::path::Path;

use aggnet::inference::{degeneracy_contour, read_draws, DrawTable, ParamSummary};

use super::fit::{ALIGNED, META};
use super::simulate::TRUTH;
use crate::config::TruthSection;
use crate::error::{CliError, Result};
use crate::io::{self, FitMeta};

pub const CENTRES: &str = "centres.csv";
pub const CIRCLES: &str = "circles.csv";
pub const THETA_HIST: &str = "theta_hist.csv";
pub const SIGMA: &str = "sigma.csv";
pub const THETA_TAU: &str = "theta_tau.csv";
pub const CONTOUR: &str = "contour.csv";

pub const CONTOUR_POINTS: usize = 200;

/// `θ (1 + 2τ²)^{-q/2}`.
pub fn expected_density(theta: f64, tau: f64, q: usize) -> f64 {
    theta * (1.0 + 2.0 * tau * tau).powf(-(q as f64) / 2.0)
}

fn write_centres<W: Write>(mut w: W, t: &DrawTable) -> std::io::Result<()> {
    write!(w, "draw")?;
    for g in 0..t.groups {
        for s in 0..t.dim {
            write!(w, ",mu_{g}_{s}")?;
        }
    }
    writeln!(w)?;
    for (i, p) in t.params.iter().enumerate() {
        write!(w, "{}", t.draw[i])?;
        for g in 0..t.groups {
            for s in 0..t.dim {
                write!(w, ",{}", p.mu[(g, s)])?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Circles of radius `2σ` (posterior mean) around the highest-density draw.
fn write_circles<W: Write>(mut w: W, t: &DrawTable) -> std::io::Result<()> {
    let best = (0..t.len()).fold(0, |b, i| if t.log_density[i] > t.log_density[b] { i } else { b });
    write!(w, "group")?;
    for s in 0..t.dim {
        write!(w, ",x_{s}")?;
    }
    writeln!(w, ",radius")?;
    for g in 0..t.groups {
        write!(w, "{g}")?;
        for s in 0..t.dim {
            write!(w, ",{}", t.params[best].mu[(g, s)])?;
        }
        let sigmas: Vec<f64> = t.params.iter().map(|p| p.sigma[g]).collect();
        writeln!(w, ",{}", 2.0 * ParamSummary::from_draws("", &sigmas).mean)?;
    }
    Ok(())
}

/// Equal-width bins spanning the sample; `density` integrates to one.
pub fn histogram(xs: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &x in xs {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + k as f64 * width, lo + (k + 1) as f64 * width, c))
        .collect()
}

fn write_theta_hist<W: Write>(mut w: W, t: &DrawTable, bins: usize) -> std::io::Result<()> {
    let thetas: Vec<f64> = t.params.iter().map(|p| p.theta).collect();
    let n = thetas.len() as f64;
    writeln!(w, "lower,upper,count,density")?;
    for (lo, hi, c) in histogram(&thetas, bins) {
        writeln!(w, "{lo},{hi},{c},{}", c as f64 / (n * (hi - lo)))?;
    }
    Ok(())
}

fn write_sigma<W: Write>(mut w: W, t: &DrawTable, truth: Option<&[f64]>) -> std::io::Result<()> {
    write!(w, "group,mean,median,lower,upper")?;
    if truth.is_some() {
        write!(w, ",truth")?;
    }
    writeln!(w)?;
    for g in 0..t.groups {
        let sigmas: Vec<f64> = t.params.iter().map(|p| p.sigma[g]).collect();
        let s = ParamSummary::from_draws(format!("sigma_{g}"), &sigmas);
        write!(w, "{g},{},{},{},{}", s.mean, s.median, s.lower, s.upper)?;
        if let Some(tr) = truth {
            write!(w, ",{}", tr[g])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_theta_tau<W: Write>(mut w: W, t: &DrawTable) -> std::io::Result<()> {
    writeln!(w, "draw,theta,tau,expected_density")?;
    for (i, p) in t.params.iter().enumerate() {
        writeln!(w, "{},{},{},{}", t.draw[i], p.theta, p.tau, expected_density(p.theta, p.tau, t.dim))?;
    }
    Ok(())
}

fn write_contour<W: Write>(mut w: W, density: f64, q: usize) -> std::io::Result<()> {
    let grid: Vec<f64> = (0..CONTOUR_POINTS)
        .map(|k| density + (1.0 - density) * k as f64 / (CONTOUR_POINTS - 1) as f64)
        .collect();
    writeln!(w, "theta,tau,expected_density")?;
    for (theta, tau) in degeneracy_contour(density, q, &grid) {
        writeln!(w, "{theta},{tau},{}", expected_density(theta, tau, q))?;
    }
    Ok(())
}

pub fn run(fit_dir: &Path, out: &Path, bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(CliError::Config("--bins must be positive".into()));
    }
    let meta: FitMeta = io::read_toml(&fit_dir.join(META))?;
    let aligned_path = fit_dir.join(ALIGNED);
    let table = read_draws(io::open(&aligned_path)?).map_err(|e| CliError::format(&aligned_path, e.to_string()))?;
    if table.is_empty() {
        return Err(CliError::format(&aligned_path, "no draws"));
    }
    if table.dim != meta.q || table.groups != meta.sizes.len() {
        return Err(CliError::format(
            &aligned_path,
            format!(
                "{} groups in {} dimensions, metadata says {} in {}",
                table.groups,
                table.dim,
                meta.sizes.len(),
                meta.q
            ),
        ));
    }
    let truth_path = fit_dir.join(TRUTH);
    let truth: Option<TruthSection> = if truth_path.exists() {
        Some(io::read_toml(&truth_path)?)
    } else {
        None
    };
    if let Some(t) = &truth {
        if t.scales.len() != table.groups {
            return Err(CliError::format(&truth_path, "number of scales does not match the fit"));
        }
    }

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    io::write_with(&out.join(CENTRES), |w| write_centres(w, &table))?;
    io::write_with(&out.join(CIRCLES), |w| write_circles(w, &table))?;
    io::write_with(&out.join(THETA_HIST), |w| write_theta_hist(w, &table, bins))?;
    io::write_with(&out.join(SIGMA), |w| write_sigma(w, &table, truth.as_ref().map(|t| t.scales.as_slice())))?;
    io::write_with(&out.join(THETA_TAU), |w| write_theta_tau(w, &table))?;
    io::write_with(&out.join(CONTOUR), |w| write_contour(w, meta.edge_density, meta.q))?;
    Ok(())
}
