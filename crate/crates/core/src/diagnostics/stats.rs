//! Small statistical helpers shared by the diagnostics: a chi-square
//! goodness-of-fit test and a percentile bootstrap confidence interval.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Result of a chi-square goodness-of-fit test.
#[derive(Clone, Copy, Debug)]
pub struct ChiSquareTest {
    /// Pearson statistic `sum (observed - expected)^2 / expected`.
    pub statistic: f64,
    /// Degrees of freedom (categories minus one).
    pub degrees: usize,
    /// Upper-tail probability of the statistic under the null.
    pub p_value: f64,
}

/// Pearson chi-square test of observed category counts against a probability
/// vector. Probabilities must be positive; they are normalized internally.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<ChiSquareTest> {
    if counts.len() < 2 || counts.len() != probs.len() {
        return Err(Error::DimensionMismatch {
            context: format!("{} counts against {} probabilities", counts.len(), probs.len()),
        });
    }
    let mut total_p = 0.0;
    for &p in probs {
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::InvalidProbabilities { reason: format!("expected positive category probability, got {p}") });
        }
        total_p += p;
    }
    let draws: u64 = counts.iter().sum();
    if draws == 0 {
        return Err(Error::InvalidArgument("chi-square test needs at least one draw".into()));
    }
    let mut statistic = 0.0;
    for (&c, &p) in counts.iter().zip(probs) {
        let expected = draws as f64 * p / total_p;
        let d = c as f64 - expected;
        statistic += d * d / expected;
    }
    let degrees = counts.len() - 1;
    let dist = ChiSquared::new(degrees as f64)
        .map_err(|e| Error::InvalidArgument(format!("chi-square distribution: {e}")))?;
    Ok(ChiSquareTest { statistic, degrees, p_value: 1.0 - dist.cdf(statistic) })
}

/// Linear-interpolation percentile of a sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Percentile bootstrap confidence interval for the mean of a sample. Each
/// of `draws` bootstrap replicates resamples the sample with replacement and
/// records its mean; the interval is the symmetric pair of percentiles at
/// the requested coverage level.
pub fn bootstrap_mean_ci(samples: &[f64], draws: usize, level: f64, stream: &mut RandomStream) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("bootstrap needs a nonempty sample".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: "bootstrap sample".into() });
    }
    if draws < 100 {
        return Err(Error::InvalidArgument(format!("bootstrap needs at least 100 draws, got {draws}")));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level must lie strictly between 0 and 1, got {level}")));
    }
    let n = samples.len();
    let mut means = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut s = 0.0;
        for _ in 0..n {
            let idx = (stream.uniform() * n as f64) as usize;
            s += samples[idx.min(n - 1)];
        }
        means.push(s / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("bootstrap means are finite"));
    let tail = (1.0 - level) / 2.0;
    Ok((percentile(&means, tail), percentile(&means, 1.0 - tail)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_counts_give_zero_statistic() {
        let t = chi_square_gof(&[500, 300, 200], &[0.5, 0.3, 0.2]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.degrees, 2);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn statistic_and_p_value_match_a_hand_example() {
        // 55/45 against a fair split: statistic 25/50 + 25/50 = 1.0, and the
        // one-degree upper tail at 1.0 is 0.31731.
        let t = chi_square_gof(&[55, 45], &[0.5, 0.5]).unwrap();
        assert!((t.statistic - 1.0).abs() < 1e-12);
        assert!((t.p_value - 0.317_310_507_862_914).abs() < 1e-9);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(chi_square_gof(&[10], &[1.0]).is_err());
        assert!(chi_square_gof(&[10, 10], &[0.5]).is_err());
        assert!(chi_square_gof(&[10, 10], &[0.5, 0.0]).is_err());
        assert!(chi_square_gof(&[0, 0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn bootstrap_interval_of_a_constant_sample_is_degenerate() {
        let mut stream = RandomStream::new(7, 1);
        let (lo, hi) = bootstrap_mean_ci(&[2.5; 40], 200, 0.95, &mut stream).unwrap();
        assert_eq!(lo, 2.5);
        assert_eq!(hi, 2.5);
    }

    #[test]
    fn bootstrap_interval_brackets_the_sample_mean() {
        let samples: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let mut stream = RandomStream::new(7, 2);
        let (lo, hi) = bootstrap_mean_ci(&samples, 2000, 0.95, &mut stream).unwrap();
        assert!(lo < 49.5 && 49.5 < hi);
        // Standard error is about 2.9, so the interval is a few units wide.
        assert!(hi - lo > 5.0 && hi - lo < 20.0);
    }

    #[test]
    fn bootstrap_is_reproducible_for_a_fixed_stream() {
        let samples: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let a = bootstrap_mean_ci(&samples, 500, 0.9, &mut RandomStream::new(11, 3)).unwrap();
        let b = bootstrap_mean_ci(&samples, 500, 0.9, &mut RandomStream::new(11, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_rejects_bad_arguments() {
        let mut stream = RandomStream::new(1, 1);
        assert!(bootstrap_mean_ci(&[], 200, 0.95, &mut stream).is_err());
        assert!(bootstrap_mean_ci(&[1.0], 50, 0.95, &mut stream).is_err());
        assert!(bootstrap_mean_ci(&[1.0], 200, 1.0, &mut stream).is_err());
        assert!(bootstrap_mean_ci(&[f64::NAN], 200, 0.95, &mut stream).is_err());
    }
}
