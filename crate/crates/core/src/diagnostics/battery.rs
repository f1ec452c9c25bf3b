//! Scalar test-function battery for measuring filter accuracy.
//!
//! Accuracy is measured as an L2 error over a fixed battery of bounded (or
//! mildly growing) functions of the filtered state: nine decile indicators
//! anchored at reference quantiles, the bounded ratio `x / (1 + |x|)`, and
//! the first two moments rescaled so every battery value is order one. The
//! reference quantiles and the moment scale come from an oracle marginal, so
//! the battery is a deterministic function of the study configuration.

use crate::diagnostics::grid::GridMarginal;
use crate::error::{Error, Result};

/// A frozen list of scalar test functions.
#[derive(Clone, Debug)]
pub struct ScalarBattery {
    thresholds: Vec<f64>,
    scale: f64,
}

impl ScalarBattery {
    /// Build a battery from indicator thresholds and a location/spread pair
    /// for the moment scale. The scale is `max(1, |location| + 6 spread)`, so
    /// rescaled first and second moments stay order one on the bulk of the
    /// distribution.
    pub fn new(thresholds: Vec<f64>, location: f64, spread: f64) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::InvalidArgument("battery needs at least one indicator threshold".into()));
        }
        if thresholds.iter().any(|t| !t.is_finite()) || !location.is_finite() || !spread.is_finite() || spread < 0.0 {
            return Err(Error::NonFinite { context: "battery thresholds or scale inputs".into() });
        }
        for pair in thresholds.windows(2) {
            if pair[1] < pair[0] {
                return Err(Error::InvalidArgument(format!(
                    "indicator thresholds must be sorted, got {} before {}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Self { thresholds, scale: 1.0f64.max(location.abs() + 6.0 * spread) })
    }

    /// Build a battery anchored at an oracle marginal: thresholds are its
    /// nine deciles and the moment scale comes from its mean and standard
    /// deviation.
    pub fn from_marginal(marginal: &GridMarginal) -> Result<Self> {
        Self::new(marginal.deciles()?, marginal.mean(), marginal.variance().sqrt())
    }

    /// Number of test functions.
    pub fn len(&self) -> usize {
        self.thresholds.len() + 3
    }

    /// A battery always has at least four functions.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Indicator thresholds.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Moment rescaling constant.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Evaluate every test function at `x`: indicators `1{x <= t}` in
    /// threshold order, then `x / (1 + |x|)`, then `x / scale`, then
    /// `(x / scale)^2`.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for &t in &self.thresholds {
            out.push(if x <= t { 1.0 } else { 0.0 });
        }
        out.push(x / (1.0 + x.abs()));
        let z = x / self.scale;
        out.push(z);
        out.push(z * z);
        out
    }

    /// Battery means under a weighted sample (weights need not be
    /// normalized).
    pub fn weighted_means(&self, values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: format!("{} values against {} weights", values.len(), weights.len()),
            });
        }
        let mut sums = vec![0.0; self.len()];
        let mut total = 0.0;
        for (&x, &w) in values.iter().zip(weights) {
            if !x.is_finite() || !w.is_finite() || w < 0.0 {
                return Err(Error::NonFinite { context: format!("weighted sample entry ({x}, {w})") });
            }
            if w == 0.0 {
                continue;
            }
            total += w;
            for (acc, v) in sums.iter_mut().zip(self.evaluate(x)) {
                *acc += w * v;
            }
        }
        if total <= 0.0 {
            return Err(Error::WeightsAllZero);
        }
        for s in &mut sums {
            *s /= total;
        }
        Ok(sums)
    }

    /// Battery means under an oracle marginal. Indicator means are taken as
    /// the marginal's piecewise-linear CDF at the threshold rather than a
    /// cell-center sum: the midpoint rule is first-order inaccurate on a
    /// discontinuous integrand, and that half-cell bias would otherwise put a
    /// grid-resolution floor under every convergence study that uses the
    /// battery. The three moment functions are smooth, so the cell-center
    /// quadrature is second-order accurate for them as is.
    pub fn reference_means(&self, marginal: &GridMarginal) -> Vec<f64> {
        let mut out: Vec<f64> = self.thresholds.iter().map(|&t| marginal.cdf(t)).collect();
        out.push(marginal.mean_of(|x| x / (1.0 + x.abs())));
        out.push(marginal.mean_of(|x| x / self.scale));
        out.push(marginal.mean_of(|x| (x / self.scale) * (x / self.scale)));
        out
    }
}

/// L2 error of replicated battery estimates against a reference: the root
/// mean square of the deviations pooled over replications and test
/// functions. Invariant under reordering of replications or functions.
pub fn l2_error(estimates: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    if estimates.is_empty() || reference.is_empty() {
        return Err(Error::InvalidArgument("l2_error needs at least one replication and one reference value".into()));
    }
    let mut sum = 0.0;
    for (r, est) in estimates.iter().enumerate() {
        if est.len() != reference.len() {
            return Err(Error::DimensionMismatch {
                context: format!("replication {r} has {} battery values, reference has {}", est.len(), reference.len()),
            });
        }
        for (&e, &t) in est.iter().zip(reference) {
            let d = e - t;
            if !d.is_finite() {
                return Err(Error::NonFinite { context: format!("battery deviation in replication {r}") });
            }
            sum += d * d;
        }
    }
    Ok((sum / (estimates.len() * reference.len()) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn battery() -> ScalarBattery {
        ScalarBattery::new(vec![-1.0, 0.0, 1.0], 0.0, 0.5).unwrap()
    }

    #[test]
    fn evaluation_order_and_values() {
        let b = battery();
        assert_eq!(b.len(), 6);
        assert_eq!(b.scale(), 3.0);
        let v = b.evaluate(0.0);
        // Indicators are closed on the right: x == threshold counts.
        assert_eq!(&v[..3], &[0.0, 1.0, 1.0]);
        assert_eq!(v[3], 0.0);
        assert_eq!(v[4], 0.0);
        assert_eq!(v[5], 0.0);
        let v = b.evaluate(-3.0);
        assert_eq!(&v[..3], &[1.0, 1.0, 1.0]);
        assert!((v[3] - (-0.75)).abs() < 1e-15);
        assert!((v[4] - (-1.0)).abs() < 1e-15);
        assert!((v[5] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scale_floors_at_one() {
        let b = ScalarBattery::new(vec![0.0], 0.05, 0.01).unwrap();
        assert_eq!(b.scale(), 1.0);
        let b = ScalarBattery::new(vec![0.0], 2.0, 1.0).unwrap();
        assert_eq!(b.scale(), 8.0);
    }

    #[test]
    fn weighted_means_match_hand_computation() {
        let b = battery();
        // Two points, weights 1 and 3: mean indicator at 0.0 threshold is
        // the weight share of the point at -2.
        let means = b.weighted_means(&[-2.0, 2.0], &[1.0, 3.0]).unwrap();
        assert!((means[1] - 0.25).abs() < 1e-15);
        let expected_bounded = 0.25 * (-2.0 / 3.0) + 0.75 * (2.0 / 3.0);
        assert!((means[3] - expected_bounded).abs() < 1e-15);
        assert!((means[4] - (0.25 * (-2.0 / 3.0) + 0.75 * (2.0 / 3.0))).abs() < 1e-15);
        assert!((means[5] - (4.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn l2_error_is_zero_on_exact_estimates_and_scales_one_deviation() {
        let reference = vec![0.2, 0.4, 0.6, 0.8];
        let exact = vec![reference.clone(), reference.clone()];
        assert_eq!(l2_error(&exact, &reference).unwrap(), 0.0);

        let mut off = vec![reference.clone(); 5];
        off[2][1] += 0.1;
        let expected = 0.1 / (5.0_f64 * 4.0).sqrt();
        assert!((l2_error(&off, &reference).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn l2_error_ignores_replication_order() {
        let reference = vec![0.0, 0.0];
        let a = vec![vec![0.1, 0.0], vec![0.0, -0.2], vec![0.3, 0.3]];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(l2_error(&a, &reference).unwrap(), l2_error(&b, &reference).unwrap());
    }

    #[test]
    fn shape_errors_are_reported() {
        let b = battery();
        assert!(b.weighted_means(&[1.0], &[1.0, 2.0]).is_err());
        assert!(b.weighted_means(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(l2_error(&[vec![0.0]], &[0.0, 1.0]).is_err());
        assert!(ScalarBattery::new(vec![1.0, 0.0], 0.0, 1.0).is_err());
        assert!(ScalarBattery::new(vec![], 0.0, 1.0).is_err());
    }

    #[test]
    fn reference_means_integrate_the_marginal() {
        let marginal = GridMarginal::new(vec![-2.0, 0.0, 2.0], vec![0.25, 0.5, 0.25]).unwrap();
        let b = battery();
        let means = b.reference_means(&marginal);
        // Cells span [-3,-1], [-1,1], [1,3]. Indicator references are the
        // binned CDF: threshold -1.0 collects exactly the first cell,
        // threshold 0.0 adds half of the middle cell's 0.5 mass.
        assert!((means[0] - 0.25).abs() < 1e-15);
        assert!((means[1] - 0.5).abs() < 1e-15);
        // Second moment: E[(x/3)^2] = (0.25 * 4 + 0.25 * 4) / 9.
        assert!((means[5] - 2.0 / 9.0).abs() < 1e-15);
    }
}
