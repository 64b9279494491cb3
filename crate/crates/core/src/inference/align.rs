use nalgebra::DMatrix;

use super::{InferenceError, PosteriorChain};
use crate::model::PosteriorModel;

fn centroid(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    DMatrix::from_fn(1, m.ncols(), |_, s| m.column(s).sum() / n)
}

fn centred(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = centroid(m);
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        row -= &c;
    }
    (out, c)
}

/// Mean squared Euclidean distance between corresponding rows.
pub fn mean_squared_deviation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm_squared() / a.nrows() as f64
}

/// Moves the rows of `sample` onto `reference` by translation and an
/// orthogonal map: a proper rotation, or any orthogonal matrix when
/// `allow_reflection` is set. The second value is `true` when the
/// cross-covariance has rank below `q - 1`, in which case no rotation is
/// applied.
pub fn align_to(sample: &DMatrix<f64>, reference: &DMatrix<f64>, allow_reflection: bool) -> (DMatrix<f64>, bool) {
    assert_eq!(sample.shape(), reference.shape(), "alignment needs equal shapes");
    let q = sample.ncols();
    let (xs, _) = centred(sample);
    let (ys, cy) = centred(reference);
    let h = xs.transpose() * &ys;
    let svd = h.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = s_max * 1e-12 * q as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol && s > 0.0).count();
    let degenerate = rank + 1 < q;
    let rotation = if degenerate {
        DMatrix::identity(q, q)
    } else {
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested Vᵀ");
        let mut d = DMatrix::identity(q, q);
        if !allow_reflection && (&u * &v_t).determinant() < 0.0 {
            d[(q - 1, q - 1)] = -1.0;
        }
        u * d * v_t
    };
    let mut out = xs * rotation;
    for mut row in out.row_iter_mut() {
        row += &cy;
    }
    (out, degenerate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedCentres {
    pub aligned: Vec<DMatrix<f64>>,
    pub reference: DMatrix<f64>,
    /// Samples left unrotated because of a rank-deficient cross-covariance.
    pub rank_deficient: usize,
}

/// Rigid (rotation and translation) alignment of every sample onto `reference`.
pub fn procrustes_align(samples: &[DMatrix<f64>], reference: &DMatrix<f64>) -> Result<AlignedCentres, InferenceError> {
    let mut aligned = Vec::with_capacity(samples.len());
    let mut rank_deficient = 0;
    for s in samples {
        if s.shape() != reference.shape() {
            return Err(InferenceError::Shape(format!(
                "sample is {:?}, reference is {:?}",
                s.shape(),
                reference.shape()
            )));
        }
        let (a, degenerate) = align_to(s, reference, false);
        rank_deficient += usize::from(degenerate);
        aligned.push(a);
    }
    if rank_deficient > 0 {
        log::warn!("{rank_deficient} samples had a rank-deficient cross-covariance and were only translated");
    }
    Ok(AlignedCentres {
        aligned,
        reference: reference.clone(),
        rank_deficient,
    })
}

/// Natural-space draws of one chain with centres aligned onto the draw of
/// highest log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPosterior {
    pub centres: Vec<DMatrix<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
    pub log_densities: Vec<f64>,
    pub reference: DMatrix<f64>,
    pub reference_index: usize,
    pub rank_deficient: usize,
}

impl AlignedPosterior {
    pub fn from_chain(model: &PosteriorModel, chain: &PosteriorChain) -> Result<Self, InferenceError> {
        let params = chain
            .draws
            .iter()
            .map(|x| model.natural(x))
            .collect::<Result<Vec<_>, _>>()?;
        let reference_index = chain.best_draw();
        let reference = params
            .get(reference_index)
            .ok_or(InferenceError::TooFewDraws { got: 0, min: 1 })?
            .mu
            .clone();
        let mus: Vec<DMatrix<f64>> = params.iter().map(|p| p.mu.clone()).collect();
        let aligned = procrustes_align(&mus, &reference)?;
        Ok(Self {
            centres: aligned.aligned,
            sigma: params.iter().map(|p| p.sigma.clone()).collect(),
            tau: params.iter().map(|p| p.tau).collect(),
            theta: params.iter().map(|p| p.theta).collect(),
            log_densities: chain.log_densities.clone(),
            reference,
            reference_index,
            rank_deficient: aligned.rank_deficient,
        })
    }

    pub fn len(&self) -> usize {
        self.centres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centres.is_empty()
    }

    /// Element-wise posterior mean of the aligned centres.
    pub fn mean_centres(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.reference.nrows(), self.reference.ncols());
        for c in &self.centres {
            acc += c;
        }
        acc / self.centres.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rotation2(angle: f64) -> DMatrix<f64> {
        let (s, c) = angle.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    fn shift(m: &DMatrix<f64>, t: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, s| m[(i, s)] + t[s])
    }

    fn cloud(rng: &mut impl Rng, r: usize, q: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, q, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn recovers_rigid_motion() {
        let reference = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.3, 2.0, -1.0, 0.5]);
        let moved = shift(&(&reference * rotation2(std::f64::consts::FRAC_PI_2)), &[3.0, -1.0]);
        let (aligned, degenerate) = align_to(&moved, &reference, false);
        assert!(!degenerate);
        assert!((aligned - &reference).abs().max() < 1e-9);
        let (same, _) = align_to(&reference, &reference, false);
        assert!((same - &reference).abs().max() < 1e-12);
    }

    #[test]
    fn proper_rotations_only() {
        // a mirror image cannot be undone without a reflection
        let reference = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 2.0, 0.0, 0.0, 1.0]);
        let mirrored = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 2.0, 0.0, 0.0, -1.0]);
        let (rot, _) = align_to(&mirrored, &reference, false);
        let (refl, _) = align_to(&mirrored, &reference, true);
        assert!(mean_squared_deviation(&refl, &reference) < 1e-20);
        assert!(mean_squared_deviation(&rot, &reference) > 0.1);
    }

    #[test]
    fn rank_deficiency_falls_back_to_translation() {
        let reference = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let sample = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 2.0, 0.0]);
        let out = procrustes_align(&[sample.clone()], &reference).unwrap();
        assert_eq!(out.rank_deficient, 1);
        let expected = shift(&sample, &[0.0, 1.0]);
        assert!((&out.aligned[0] - expected).abs().max() < 1e-12);
        // collinear clouds in 2-D still determine the rotation
        let line = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        let (_, degenerate) = align_to(&sample, &line, false);
        assert!(!degenerate);
    }

    #[test]
    fn alignment_beats_random_rigid_motions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let sample = cloud(&mut rng, 5, 2);
            let reference = cloud(&mut rng, 5, 2);
            let (aligned, _) = align_to(&sample, &reference, false);
            let best = mean_squared_deviation(&aligned, &reference);
            assert!(best <= mean_squared_deviation(&sample, &reference) + 1e-12);
            for _ in 0..10_000 {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let t = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                let moved = shift(&(&sample * rotation2(angle)), &t);
                assert!(best <= mean_squared_deviation(&moved, &reference) + 1e-12);
            }
        }
    }

    #[test]
    fn alignment_is_idempotent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for q in 1..=3 {
            let sample = cloud(&mut rng, 6, q);
            let reference = cloud(&mut rng, 6, q);
            let (once, _) = align_to(&sample, &reference, false);
            let (twice, _) = align_to(&once, &reference, false);
            assert!((&once - &twice).abs().max() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let r = DMatrix::zeros(3, 2);
        assert!(procrustes_align(&[DMatrix::zeros(4, 2)], &r).is_err());
    }
}
