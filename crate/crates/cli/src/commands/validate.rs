//! Checks of the closed-form results against their oracles, written as a
//! plain-text report.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use aggnet::kernel::{gaussian_exp_identity, KernelMoments};
use aggnet::likelihood::match_beta_binomial;
use aggnet::moments::{pair_moments, term_coefficients};
use aggnet::seed::stream_rng;
use aggnet::simulate::{
    enumerate_second_moment, integrate, mc_kernel_moments, mc_moments, mc_samples, quadrature_gaussian_exp,
};
use aggnet::{ClusterPair, GroupConfig, KernelParams, NetworkKind, TermClass};
use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{CliError, Result};
use crate::io;

pub const REPORT: &str = "validation_report.txt";

/// Pass/fail thresholds and sample counts.
pub const GRID_POINTS: usize = 20;
pub const GRID_SIMS: usize = 4000;
pub const KERNEL_DRAWS: usize = 100_000;
pub const Z_LIMIT: f64 = 4.0;
pub const ENUMERATION_MAX: u64 = 6;
/// The identity lies in (0, 1] and its oracle targets an absolute error.
pub const QUADRATURE_ABS_TOL: f64 = 1e-9;
pub const QUADRATURE_REL_TOL: f64 = 1e-8;
pub const TV_SIMS: usize = 100_000;
pub const TV_LIMIT: f64 = 0.02;

/// Deliberate defects for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Adds one to a term count of the analytic table.
    TableCoefficient,
}

const KINDS: [NetworkKind; 4] = [
    NetworkKind::DIRECTED,
    NetworkKind::UNDIRECTED,
    NetworkKind {
        directed: true,
        weighted: true,
    },
    NetworkKind {
        directed: false,
        weighted: true,
    },
];

fn kind_label(kind: NetworkKind) -> &'static str {
    match (kind.directed, kind.weighted) {
        (true, false) => "directed",
        (false, false) => "undirected",
        (true, true) => "directed-weighted",
        (false, true) => "undirected-weighted",
    }
}

#[derive(Debug, Default)]
struct Report {
    text: String,
    failures: Vec<String>,
}

impl Report {
    fn section(&mut self, title: &str) {
        let _ = writeln!(self.text, "\n## {title}");
    }

    fn line(&mut self, s: impl AsRef<str>) {
        let _ = writeln!(self.text, "{}", s.as_ref());
    }

    fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl AsRef<str>) {
        let name = name.into();
        let _ = writeln!(
            self.text,
            "{} {name}: {}",
            if pass { "PASS" } else { "FAIL" },
            detail.as_ref()
        );
        if !pass {
            self.failures.push(name);
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Random two-group configurations over all four network kinds: simulated
/// mean and variance of one aggregate entry against the closed forms.
fn moment_grid(report: &mut Report, seed: u64) -> Result<()> {
    report.section(&format!(
        "aggregate moments vs simulation ({GRID_POINTS} points, {GRID_SIMS} simulations each, |z| < {Z_LIMIT})"
    ));
    let mut rng = stream_rng(seed, 0);
    for k in 0..GRID_POINTS {
        let kind = KINDS[k % 4];
        let q = rng.random_range(1..=3usize);
        let sizes = vec![rng.random_range(2..=6usize), rng.random_range(2..=6usize)];
        let delta: f64 = rng.random_range(0.0..3.0);
        let scales = vec![rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
        let theta: f64 = rng.random_range(0.1..1.0);
        let (a, b) = if k % 8 < 4 { (0, 1) } else { (0, 0) };
        let mut centres = DMatrix::zeros(2, q);
        centres[(1, 0)] = delta;
        let cfg = GroupConfig::new(sizes.clone(), centres, scales.clone()).map_err(runtime)?;
        let kp = KernelParams::new(theta, q).map_err(runtime)?;
        let exact = pair_moments(&cfg, &kp, kind, a, b).map_err(runtime)?;
        let est = mc_moments(&cfg, &kp, kind, a, b, GRID_SIMS, stream_rng(seed, 1 + k as u64).random())
            .map_err(runtime)?;
        let z_mean = (est.mean_hat - exact.mean) / est.std_error_mean;
        let z_var = (est.var_hat - exact.variance) / est.std_error_var;
        let ok = |z: f64| z.abs() < Z_LIMIT || (z.is_nan() && exact.variance == 0.0);
        report.check(
            format!("grid[{k}]"),
            ok(z_mean) && ok(z_var),
            format!(
                "{} q={q} n={sizes:?} Y[{a},{b}] delta={delta:.3} sigma=[{:.3},{:.3}] theta={theta:.3}: \
                 mean {:.4} vs {:.4} (z {z_mean:.2}), var {:.4} vs {:.4} (z {z_var:.2})",
                kind_label(kind),
                scales[0],
                scales[1],
                exact.mean,
                est.mean_hat,
                exact.variance,
                est.var_hat
            ),
        );
    }
    Ok(())
}

/// Kernel moments against draws of node coordinates.
fn kernel_grid(report: &mut Report, seed: u64) -> Result<()> {
    report.section(&format!(
        "kernel moments vs coordinate draws ({GRID_POINTS} points, {KERNEL_DRAWS} draws each, |z| < {Z_LIMIT})"
    ));
    let mut rng = stream_rng(seed, 100);
    for k in 0..GRID_POINTS {
        let q = rng.random_range(1..=3usize);
        let delta: f64 = rng.random_range(0.0..5.0);
        let (sa, sb): (f64, f64) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let theta: f64 = rng.random_range(0.1..1.0);
        let pair = ClusterPair::from_separation(delta, sa * sa, sb * sb).map_err(runtime)?;
        let kp = KernelParams::new(theta, q).map_err(runtime)?;
        let exact = KernelMoments::new(&pair, &kp);
        let est = mc_kernel_moments(&pair, &kp, KERNEL_DRAWS, stream_rng(seed, 200 + k as u64).random());
        let zs = [
            est.mean.z_score(exact.mean),
            est.second.z_score(exact.second),
            est.cross_a.z_score(exact.cross_common_a),
            est.cross_b.z_score(exact.cross_common_b),
        ];
        let worst = zs.iter().fold(0.0f64, |m, z| m.max(z.abs()));
        report.check(
            format!("kernel[{k}]"),
            worst < Z_LIMIT,
            format!("q={q} delta={delta:.3} sigma=[{sa:.3},{sb:.3}] theta={theta:.3}: max |z| {worst:.2}"),
        );
    }
    Ok(())
}

/// Brute-force term counts against the analytic table.
fn enumeration(report: &mut Report, fault: Option<Fault>) -> Result<()> {
    report.section(&format!("term table vs enumeration (group sizes up to {ENUMERATION_MAX})"));
    let mut checked = 0;
    for kind in [NetworkKind::DIRECTED, NetworkKind::UNDIRECTED] {
        for n_a in 1..=ENUMERATION_MAX {
            for n_b in std::iter::once(None).chain((1..=ENUMERATION_MAX).map(Some)) {
                let mut table = term_coefficients(n_a, n_b, kind);
                if fault == Some(Fault::TableCoefficient) && n_a == 4 && n_b.is_none() && kind.directed {
                    table.counts[TermClass::Matched.index()] += 1;
                }
                let brute = enumerate_second_moment(n_a, n_b, kind).map_err(runtime)?;
                checked += 1;
                if table != brute {
                    report.check(
                        format!("table[{} n_a={n_a} n_b={n_b:?}]", kind_label(kind)),
                        false,
                        format!("table {:?} vs enumeration {:?}", table.counts, brute.counts),
                    );
                }
            }
        }
    }
    let failed = report.failures.iter().filter(|f| f.starts_with("table")).count();
    report.check(
        "table",
        failed == 0,
        format!("{} of {checked} configurations match exactly", checked - failed),
    );
    Ok(())
}

/// Density of `Normal(mean, var)`.
fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// One-dimensional quadrature of the Gaussian identity and of the
/// per-coordinate factors of the kernel moments.
fn quadrature(report: &mut Report) -> Result<()> {
    report.section("closed forms vs adaptive quadrature");
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for &mu in &[0.0, 0.5, 1.0, 3.0, 7.0] {
        for &var in &[0.0, 0.01, 1.0, 4.0, 25.0] {
            let q = quadrature_gaussian_exp(mu, var).map_err(runtime)?;
            worst = worst.max((gaussian_exp_identity(mu, var) - q).abs());
        }
    }
    report.check(
        "quadrature identity",
        worst < QUADRATURE_ABS_TOL,
        format!("max absolute error {worst:.2e} over 25 (mu, var) pairs, limit {QUADRATURE_ABS_TOL:e}"),
    );

    let mut worst = 0.0f64;
    for &(delta, sa, sb, q) in &[(0.0, 1.0, 1.0, 1), (1.0, 1.0, 2.0, 2), (2.5, 0.3, 1.5, 3), (4.0, 2.0, 0.5, 2)] {
        let theta = 0.7;
        let pair = ClusterPair::from_separation(delta, sa * sa, sb * sb).map_err(runtime)?;
        let kp = KernelParams::new(theta, q).map_err(runtime)?;
        let exact = KernelMoments::new(&pair, &kp);
        let v = sa * sa + sb * sb;
        // the coordinate difference is Normal(delta e_1, v I)
        let coord = |m: f64, power: f64| {
            integrate(|x| normal_pdf(x, m, v) * (-power * x * x / 2.0).exp(), f64::NEG_INFINITY, f64::INFINITY, 1e-14)
        };
        let mean = theta * coord(delta, 1.0).map_err(runtime)? * coord(0.0, 1.0).map_err(runtime)?.powi(q as i32 - 1);
        let second =
            theta * theta * coord(delta, 2.0).map_err(runtime)? * coord(0.0, 2.0).map_err(runtime)?.powi(q as i32 - 1);
        // shared node x in cluster a: E_y[exp(-(x - y)²/2)] is the identity, squared and averaged over x
        let shared = |m: f64| {
            integrate(
                |x| normal_pdf(x, 0.0, sa * sa) * gaussian_exp_identity(x - m, sb * sb).powi(2),
                f64::NEG_INFINITY,
                f64::INFINITY,
                1e-14,
            )
        };
        let cross_a = theta * theta * shared(delta).map_err(runtime)? * shared(0.0).map_err(runtime)?.powi(q as i32 - 1);
        for (got, want) in [(exact.mean, mean), (exact.second, second), (exact.cross_common_a, cross_a)] {
            worst = worst.max(rel(got, want));
        }
    }
    report.check(
        "quadrature kernel",
        worst < QUADRATURE_REL_TOL,
        format!("mean, second and shared-node moments, max relative error {worst:.2e}, limit {QUADRATURE_REL_TOL:e}"),
    );
    Ok(())
}

/// Total-variation distance between the empirical distribution of `ys` on
/// `0..=trials` and the moment-matched beta-binomial.
pub fn total_variation(ys: &[u64], mean: f64, variance: f64, trials: u64) -> Result<f64> {
    let bb = match_beta_binomial(mean, variance, trials).map_err(runtime)?;
    let mut counts = vec![0u64; trials as usize + 1];
    for &y in ys {
        let slot = counts
            .get_mut(y as usize)
            .ok_or_else(|| CliError::Runtime(format!("count {y} exceeds {trials} trials")))?;
        *slot += 1;
    }
    let n = ys.len() as f64;
    Ok(0.5
        * counts
            .iter()
            .enumerate()
            .map(|(k, &c)| (c as f64 / n - bb.ln_pmf(k as u64).exp()).abs())
            .sum::<f64>())
}

/// Two directed groups of 10 and 15 nodes, separation 1, shared scale 5,
/// `q = 2`, `theta = 1`.
fn total_variation_check(report: &mut Report, seed: u64) -> Result<()> {
    report.section(&format!("beta-binomial vs simulated Y_ab ({TV_SIMS} simulations, TV < {TV_LIMIT})"));
    let cfg = GroupConfig::new(
        vec![10, 15],
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
        vec![5.0, 5.0],
    )
    .map_err(runtime)?;
    let kp = KernelParams::new(1.0, 2).map_err(runtime)?;
    let kind = NetworkKind::DIRECTED;
    let m = pair_moments(&cfg, &kp, kind, 0, 1).map_err(runtime)?;
    let ys = mc_samples(&cfg, &kp, kind, 0, 1, TV_SIMS, stream_rng(seed, 300).random()).map_err(runtime)?;
    let tv = total_variation(&ys, m.mean, m.variance, m.trials)?;
    report.line(format!(
        "n = (10, 15), delta = 1, sigma = 5, q = 2, theta = 1: trials {}, mean {:.4}, variance {:.4}",
        m.trials, m.mean, m.variance
    ));
    report.check("total variation", tv < TV_LIMIT, format!("distance {tv:.5}"));
    Ok(())
}

pub fn run(out: &Path, seed: u64, fault: Option<Fault>) -> Result<()> {
    let mut report = Report::default();
    report.line(format!("validation report (seed {seed})"));
    moment_grid(&mut report, seed)?;
    kernel_grid(&mut report, seed)?;
    enumeration(&mut report, fault)?;
    quadrature(&mut report)?;
    total_variation_check(&mut report, seed)?;
    let verdict = if report.failures.is_empty() {
        "all checks passed".to_string()
    } else {
        format!("{} checks failed: {}", report.failures.len(), report.failures.join(", "))
    };
    report.line(format!("\n{verdict}"));

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    io::write_with(&out.join(REPORT), |w| w.write_all(report.text.as_bytes()))?;
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(verdict))
    }
}
