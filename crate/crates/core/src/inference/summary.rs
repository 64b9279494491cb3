use nalgebra::DMatrix;

use super::{percentile, AlignedPosterior, InferenceError, MIN_SUMMARY_DRAWS};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    /// 2.5th percentile.
    pub lower: f64,
    /// 97.5th percentile.
    pub upper: f64,
}

/// Mean computed around the first value, exact for constant samples.
fn shifted_mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

impl ParamSummary {
    pub fn from_draws(name: impl Into<String>, xs: &[f64]) -> Self {
        Self {
            name: name.into(),
            mean: shifted_mean(xs),
            median: percentile(xs, 0.5),
            lower: percentile(xs, 0.025),
            upper: percentile(xs, 0.975),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    /// Rows `mu_g_s` (group-major), `sigma_g`, `tau`, `theta`.
    pub params: Vec<ParamSummary>,
    /// Centres of the highest-density draw.
    pub map_centres: DMatrix<f64>,
    /// Posterior mean of `2 σ_g`.
    pub radii: Vec<f64>,
    pub n_draws: usize,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn sigma(&self, g: usize) -> Option<&ParamSummary> {
        self.get(&format!("sigma_{g}"))
    }
}

pub fn summarize(aligned: &AlignedPosterior) -> Result<PosteriorSummary, InferenceError> {
    let n = aligned.len();
    if n < MIN_SUMMARY_DRAWS {
        return Err(InferenceError::TooFewDraws {
            got: n,
            min: MIN_SUMMARY_DRAWS,
        });
    }
    let (r, q) = aligned.reference.shape();
    let mut params = Vec::with_capacity(r * q + r + 2);
    for g in 0..r {
        for s in 0..q {
            let xs: Vec<f64> = aligned.centres.iter().map(|c| c[(g, s)]).collect();
            params.push(ParamSummary::from_draws(format!("mu_{g}_{s}"), &xs));
        }
    }
    let mut radii = Vec::with_capacity(r);
    for g in 0..r {
        let xs: Vec<f64> = aligned.sigma.iter().map(|s| s[g]).collect();
        let p = ParamSummary::from_draws(format!("sigma_{g}"), &xs);
        radii.push(2.0 * p.mean);
        params.push(p);
    }
    params.push(ParamSummary::from_draws("tau", &aligned.tau));
    params.push(ParamSummary::from_draws("theta", &aligned.theta));
    Ok(PosteriorSummary {
        params,
        map_centres: aligned.centres[aligned.reference_index].clone(),
        radii,
        n_draws: n,
    })
}

/// Points `(θ, τ)` of equal expected kernel `θ (1 + 2τ²)^{-q/2} = edge_density`
/// for each `θ` of the grid; values of `θ` below the density have no solution
/// and are skipped.
pub fn degeneracy_contour(edge_density: f64, q: usize, theta_grid: &[f64]) -> Vec<(f64, f64)> {
    let qf = q as f64;
    theta_grid
        .iter()
        .filter(|&&t| t >= edge_density && edge_density > 0.0)
        .map(|&t| {
            let ratio = (t / edge_density).powf(2.0 / qf);
            (t, ((ratio - 1.0) / 2.0).max(0.0).sqrt())
        })
        .collect()
}
