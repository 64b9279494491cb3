/// Linearly interpolated percentile (`p` in `[0, 1]`) of unsorted data:
/// position `(n - 1) p` in the sorted sample.
pub fn percentile(xs: &[f64], p: f64) -> f64 {
    assert!(!xs.is_empty(), "percentile of an empty sample");
    assert!((0.0..=1.0).contains(&p), "p = {p} outside [0, 1]");
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Effective sample size from Geyer's initial monotone sequence estimator.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let c: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let autocov = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / nf;
    let c0 = autocov(0);
    if c0 <= 0.0 {
        return nf;
    }
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        lag += 2;
    }
    nf / tau.max(1.0 / nf.log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn percentile_definition() {
        let xs: Vec<f64> = (0..100).map(f64::from).collect();
        assert!((percentile(&xs, 0.025) - 2.475).abs() < 1e-12);
        assert!((percentile(&xs, 0.975) - 96.525).abs() < 1e-12);
        assert_eq!(percentile(&xs, 0.0), 0.0);
        assert_eq!(percentile(&xs, 1.0), 99.0);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(percentile(&[4.0; 7], 0.975), 4.0);
    }

    #[test]
    fn ess_of_independent_and_correlated_series() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let iid: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ess = effective_sample_size(&iid);
        assert!(ess > 4000.0 && ess < 6500.0, "{ess}");
        // AR(1) with coefficient 0.9: integrated time (1 + 0.9) / (1 - 0.9) = 19
        let mut ar = vec![0.0; 50000];
        for t in 1..ar.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            ar[t] = 0.9 * ar[t - 1] + (1.0f64 - 0.81).sqrt() * e;
        }
        let ess = effective_sample_size(&ar);
        let expected = 50000.0 / 19.0;
        assert!((ess / expected - 1.0).abs() < 0.25, "{ess} vs {expected}");
    }
}
