//! Per-step summary statistics shared by the particle and Kalman island
//! filters.

/// Effective sample size of a nonnegative weight vector,
/// `(sum w)^2 / sum w^2`.
///
/// Insensitive to scale; equals the number of weights when they are equal and
/// approaches 1 as one weight dominates. An all-zero (or empty) vector returns
/// 0, the natural reading for a dead ensemble.
pub fn ess(weights: &[f64]) -> f64 {
    let sum: f64 = weights.iter().sum();
    let sumsq: f64 = weights.iter().map(|w| w * w).sum();
    if sumsq == 0.0 {
        0.0
    } else {
        sum * sum / sumsq
    }
}

/// One step's worth of filter output: selection health plus marginal moments
/// of the environment and state estimates, in both predictor (before the
/// current observation) and filtered (after it) flavors.
#[derive(Clone, Debug, PartialEq)]
pub struct StepEstimates {
    /// Time index the estimates refer to.
    pub step: usize,
    /// Effective sample size of the island selection weights.
    pub island_ess: f64,
    /// Mean across islands of the within-island selection ESS; absent for
    /// filters without an inner particle level.
    pub inner_ess_mean: Option<f64>,
    /// Mean island potential (the per-step normalizing increment).
    pub pot_mean: f64,
    /// Smallest island potential.
    pub pot_min: f64,
    /// Largest island potential.
    pub pot_max: f64,
    /// `ln(pot_mean)`; summing these over steps gives the log-normalizing
    /// estimate of the observation likelihood.
    pub log_norm_increment: f64,
    /// Filtered environment mean, one entry per parameter coordinate.
    pub param_filtered_mean: Vec<f64>,
    /// Filtered environment marginal variances.
    pub param_filtered_var: Vec<f64>,
    /// Predictor environment mean.
    pub param_predictor_mean: Vec<f64>,
    /// Predictor environment marginal variances.
    pub param_predictor_var: Vec<f64>,
    /// Filtered state mean, one entry per state coordinate.
    pub state_filtered_mean: Vec<f64>,
    /// Filtered state marginal variances.
    pub state_filtered_var: Vec<f64>,
    /// Predictor state mean.
    pub state_predictor_mean: Vec<f64>,
    /// Predictor state marginal variances.
    pub state_predictor_var: Vec<f64>,
}

/// Weighted marginal mean and variance of flat `(count x dim)` points.
///
/// `weights` need not be normalized but must have a positive sum (callers
/// guard extinction before computing estimates). Weights are normalized
/// before accumulation, so a single-point ensemble reports its point exactly
/// (its normalized weight is exactly one) and the statistics are exactly
/// invariant under power-of-two rescaling of the weights. Variances use the
/// plain second-moment formula `E[x^2] - (E[x])^2`.
pub(crate) fn weighted_marginals(points: &[f64], dim: usize, weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(points.len(), weights.len() * dim);
    let wsum: f64 = weights.iter().sum();
    let mut mean = vec![0.0; dim];
    let mut second = vec![0.0; dim];
    for (row, &w) in points.chunks_exact(dim).zip(weights.iter()) {
        let p = w / wsum;
        for k in 0..dim {
            mean[k] += p * row[k];
            second[k] += p * row[k] * row[k];
        }
    }
    for k in 0..dim {
        second[k] = (second[k] - mean[k] * mean[k]).max(0.0);
    }
    (mean, second)
}

/// Unweighted marginal mean and variance of flat `(count x dim)` points.
pub(crate) fn flat_marginals(points: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let count = points.len() / dim;
    let mut mean = vec![0.0; dim];
    let mut second = vec![0.0; dim];
    for row in points.chunks_exact(dim) {
        for k in 0..dim {
            mean[k] += row[k];
            second[k] += row[k] * row[k];
        }
    }
    for k in 0..dim {
        mean[k] /= count as f64;
        second[k] /= count as f64;
        second[k] = (second[k] - mean[k] * mean[k]).max(0.0);
    }
    (mean, second)
}
