//! Log-log convergence-rate regression.
//!
//! Fits `log error = intercept + slope * log N` by ordinary least squares and
//! reports a 95% confidence interval for the slope. An error decaying like
//! `c / sqrt(N)` fits a slope of exactly -1/2; `c / N` fits exactly -1.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Fitted convergence rate on a log-log scale.
#[derive(Clone, Copy, Debug)]
pub struct RateFit {
    /// OLS slope of `log error` on `log N`.
    pub slope: f64,
    /// OLS intercept.
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    /// Lower end of the 95% confidence interval for the slope.
    pub ci_low: f64,
    /// Upper end of the 95% confidence interval for the slope.
    pub ci_high: f64,
    /// Number of regression points.
    pub points: usize,
}

/// Minimum ratio between the largest and smallest sample size; a narrower
/// design cannot identify a rate.
const MIN_SPAN: f64 = 16.0;

/// Fit a convergence rate to `(sample size, error)` points.
///
/// Requires at least four points whose sizes span a factor of sixteen, and
/// strictly positive, finite sizes and errors (a zero error has no
/// logarithm, and signals a degenerate study rather than a rate).
pub fn rate_regression(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::InvalidArgument(format!("rate regression needs at least 4 points, got {}", points.len())));
    }
    let mut min_n = f64::INFINITY;
    let mut max_n = 0.0f64;
    for &(n, e) in points {
        if !n.is_finite() || n <= 0.0 {
            return Err(Error::InvalidArgument(format!("sample sizes must be positive and finite, got {n}")));
        }
        if !e.is_finite() || e <= 0.0 {
            return Err(Error::InvalidArgument(format!("errors must be positive and finite for a log-log fit, got {e}")));
        }
        min_n = min_n.min(n);
        max_n = max_n.max(n);
    }
    if max_n / min_n < MIN_SPAN - 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "sample sizes span a factor of {:.2}, need at least {MIN_SPAN}",
            max_n / min_n
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(s, _)| s.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
    let x_bar = xs.iter().sum::<f64>() / n;
    let y_bar = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(&ys) {
        sxx += (x - x_bar) * (x - x_bar);
        sxy += (x - x_bar) * (y - y_bar);
    }
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let mut ssr = 0.0;
    for (&x, &y) in xs.iter().zip(&ys) {
        let r = y - intercept - slope * x;
        ssr += r * r;
    }
    let df = points.len() - 2;
    let slope_se = (ssr.max(0.0) / df as f64 / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::InvalidArgument(format!("t distribution: {e}")))?
        .inverse_cdf(0.975);
    Ok(RateFit {
        slope,
        intercept,
        slope_se,
        ci_low: slope - t * slope_se,
        ci_high: slope + t * slope_se,
        points: points.len(),
    })
}
