//! Core Feynman-Kac abstractions: quenched state-space models and weighted
//! particle ensembles.
//!
//! A model describes a parameter (environment) chain `theta_n`, a state chain
//! `x_n` whose kernel is quenched on the current parameter, and a nonnegative
//! potential `G_n(theta, x)` scoring states against the observation at time
//! `n`. Filters in this crate combine three primitives on top of such a model:
//! potential evaluation, Boltzmann-Gibbs reweighting, and kernel mutation.
//!
//! Potentials are handled in linear space throughout. Only ratios of
//! potentials enter selection, so models are free to drop constant factors;
//! keeping the pipeline linear makes selection probabilities exactly invariant
//! under rescaling of `G` by a power of two (the scaling commutes with IEEE
//! rounding), which is the reproducibility contract the filters are tested
//! against.

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// A state-space model with a random environment, in the form consumed by the
/// filters: parameter kernel, quenched state kernel, and potential.
///
/// All vectors are passed as flat `f64` slices whose lengths are given by the
/// `*_dim` methods. Samplers write into caller-provided buffers so hot loops
/// stay allocation-free. The time index `n` passed to the kernels is the index
/// of the value being *produced* (e.g. `sample_param(n, ..)` draws `theta_n`
/// from its law given `theta_{n-1}`).
pub trait FkModel: Sync {
    /// Dimension of the state vector `x_n`.
    fn state_dim(&self) -> usize;
    /// Dimension of the parameter vector `theta_n`.
    fn param_dim(&self) -> usize;
    /// Dimension of the observation vector `y_n`.
    fn obs_dim(&self) -> usize;

    /// Draw `theta_0` from the initial parameter law.
    fn sample_init_param(&self, rng: &mut RandomStream, out: &mut [f64]);
    /// Draw `x_0` from the initial state law given `theta_0`.
    fn sample_init_state(&self, theta: &[f64], rng: &mut RandomStream, out: &mut [f64]);
    /// Draw `theta_n` from the parameter kernel given `theta_{n-1}`.
    fn sample_param(&self, n: usize, prev: &[f64], rng: &mut RandomStream, out: &mut [f64]);
    /// Draw `x_n` from the quenched state kernel given `theta_n` and `x_{n-1}`.
    fn sample_state(&self, n: usize, theta: &[f64], prev: &[f64], rng: &mut RandomStream, out: &mut [f64]);

    /// Potential `G_n(theta, x)` against observation `obs`, a finite
    /// nonnegative value. Constant factors may be dropped; only ratios within
    /// a step matter.
    fn potential(&self, n: usize, theta: &[f64], state: &[f64], obs: &[f64]) -> f64;
}

/// A weighted particle ensemble over one state space, stored flat.
#[derive(Clone, Debug)]
pub struct WeightedEnsemble {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    log_norm: f64,
}

impl WeightedEnsemble {
    /// Build an ensemble with uniform weights from flat point storage
    /// (`points.len()` must be a positive multiple of `dim`).
    pub fn new_uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("ensemble dimension must be positive".into()));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                context: format!("{} point values do not form vectors of length {dim}", points.len()),
            });
        }
        let n = points.len() / dim;
        Ok(Self { dim, points, weights: vec![1.0 / n as f64; n], log_norm: 0.0 })
    }

    /// Number of particles.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// True when the ensemble holds no particles (unreachable via constructors).
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The `j`-th particle.
    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    /// Flat point storage, row-major `(len x dim)`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Current weights (not necessarily normalized).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Overwrite the weights (same length required).
    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                context: format!("{} weights for {} particles", weights.len(), self.weights.len()),
            });
        }
        self.weights = weights;
        Ok(())
    }

    /// Rescale weights to sum to one.
    pub fn normalize(&mut self) -> Result<()> {
        self.weights = boltzmann_gibbs(&self.weights)?;
        Ok(())
    }

    /// Running log of the empirical normalizing increments accumulated by the
    /// filter that owns this ensemble (log of the product of mean potentials).
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// Set the accumulated log-normalizing constant.
    pub fn set_log_norm(&mut self, value: f64) {
        self.log_norm = value;
    }

    /// Iterator over `(point, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }
}

/// Evaluate the potential of every particle in `ensemble` against `obs`.
///
/// Returns the vector `(G_n(theta, x_j))_j` in particle order. Any NaN,
/// infinite, or negative potential aborts with the offending index.
pub fn evaluate_potentials(
    model: &dyn FkModel,
    n: usize,
    theta: &[f64],
    ensemble: &WeightedEnsemble,
    obs: &[f64],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ensemble.len());
    for j in 0..ensemble.len() {
        let g = model.potential(n, theta, ensemble.point(j), obs);
        if !g.is_finite() || g < 0.0 {
            return Err(Error::NonFinitePotential { step: n, index: j, value: g });
        }
        out.push(g);
    }
    Ok(out)
}

/// Boltzmann-Gibbs transform: normalize nonnegative weights into a probability
/// vector `w_j / sum_k w_k`.
///
/// Errors on NaN/infinite/negative weights; an all-zero vector means the
/// particle system died ([`Error::WeightsAllZero`] — callers attach level and
/// step context).
pub fn boltzmann_gibbs(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("empty weight vector".into()));
    }
    let mut sum = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidProbabilities {
                reason: format!("weight {w:e} at index {j} is not a finite nonnegative number"),
            });
        }
        sum += w;
    }
    if sum == 0.0 {
        return Err(Error::WeightsAllZero);
    }
    Ok(weights.iter().map(|w| w / sum).collect())
}

/// Mutate selected state particles through the quenched kernel at time `n`.
///
/// `selected` is flat `(count x dim)` storage of the parent states (after
/// selection). `theta_next` is the already-mutated parameter the kernel is
/// quenched on. Particle `j` draws from `rng.substream(j)`, so the output is
/// bit-identical no matter how the loop is scheduled; the stream argument is
/// the per-ensemble mutation stream, not a raw generator.
pub fn mutate(
    model: &dyn FkModel,
    n: usize,
    theta_next: &[f64],
    selected: &[f64],
    rng: &RandomStream,
) -> Result<Vec<f64>> {
    let dim = model.state_dim();
    if selected.is_empty() || !selected.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            context: format!("{} selected values do not form states of length {dim}", selected.len()),
        });
    }
    let count = selected.len() / dim;
    let mut out = vec![0.0; selected.len()];
    for j in 0..count {
        let mut stream = rng.substream(j as u64);
        model.sample_state(
            n,
            theta_next,
            &selected[j * dim..(j + 1) * dim],
            &mut stream,
            &mut out[j * dim..(j + 1) * dim],
        );
    }
    Ok(out)
}

/// Weighted ensemble mean of a vector-valued test function.
///
/// Returns `sum_j w_j f(x_j)` with the weights normalized first. `f` writes
/// its value into the provided output slice of length `out_dim`.
pub fn ensemble_mean<F>(ensemble: &WeightedEnsemble, out_dim: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let probs = boltzmann_gibbs(ensemble.weights())?;
    let mut acc = vec![0.0; out_dim];
    let mut buf = vec![0.0; out_dim];
    for (j, p) in probs.iter().enumerate() {
        f(ensemble.point(j), &mut buf);
        for (a, b) in acc.iter_mut().zip(buf.iter()) {
            if !b.is_finite() {
                return Err(Error::NonFinite { context: format!("test function value at particle {j}") });
            }
            *a += p * b;
        }
    }
    Ok(acc)
}

/// Scalar convenience wrapper around [`ensemble_mean`].
pub fn ensemble_mean_scalar<F>(ensemble: &WeightedEnsemble, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let v = ensemble_mean(ensemble, 1, |x, out| out[0] = f(x))?;
    Ok(v[0])
}
