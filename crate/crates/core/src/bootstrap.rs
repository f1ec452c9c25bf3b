//! A standalone bootstrap particle filter over the pair chain.
//!
//! One environment chain following the prior parameter kernel, one population
//! of state particles quenched on it, multinomial selection at every step.
//! This is exactly the `n1 = 1` degenerate case of the island system, and its
//! randomness is keyed the same way (as island slot 0), so for a fixed seed it
//! reproduces a one-island [`crate::lipf::IslandSystem`] draw for draw — the
//! reduction is tested bitwise, not just in distribution.

use crate::error::{Error, Level, Result};
use crate::estimates::{ess, flat_marginals, weighted_marginals, StepEstimates};
use crate::fk::{boltzmann_gibbs, mutate, FkModel};
use crate::resampling::multinomial_resample;
use crate::rng::{labels, RandomStream};

/// Potentials of one bootstrap step.
#[derive(Clone, Debug)]
pub struct BootstrapStepCache {
    step: usize,
    pots: Vec<f64>,
}

impl BootstrapStepCache {
    /// Time index the cache was computed at.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Per-particle potentials.
    pub fn potentials(&self) -> &[f64] {
        &self.pots
    }
}

/// Bootstrap particle filter for a model with a random environment.
#[derive(Clone, Debug)]
pub struct BootstrapFilter<M: FkModel> {
    model: M,
    n2: usize,
    theta: Vec<f64>,
    states: Vec<f64>,
    stream: RandomStream,
    step: usize,
}

impl<M: FkModel> BootstrapFilter<M> {
    /// Initialize `n2` particles at time 0.
    pub fn init(model: M, n2: usize, stream: &RandomStream) -> Result<Self> {
        if n2 == 0 {
            return Err(Error::InvalidArgument("particle count must be positive".into()));
        }
        let pd = model.param_dim();
        let sd = model.state_dim();
        let island = stream.substream(labels::INIT).substream(labels::ISLANDS).substream(0);
        let mut theta = vec![0.0; pd];
        let mut param_rng = island.substream(labels::PARAM_INIT);
        model.sample_init_param(&mut param_rng, &mut theta);
        let state_node = island.substream(labels::STATE_INIT);
        let mut states = vec![0.0; n2 * sd];
        for j in 0..n2 {
            let mut rng = state_node.substream(j as u64);
            model.sample_init_state(&theta, &mut rng, &mut states[j * sd..(j + 1) * sd]);
        }
        Ok(Self { model, n2, theta, states, stream: stream.clone(), step: 0 })
    }

    /// Particle count.
    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Current time index.
    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Current environment value.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Current particles, flat `(n2 x state_dim)`.
    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Evaluate all particle potentials against the observation at the
    /// current step. Errors with [`Error::Extinction`] when they all vanish.
    pub fn evaluate(&self, obs: &[f64]) -> Result<BootstrapStepCache> {
        if obs.len() != self.model.obs_dim() {
            return Err(Error::DimensionMismatch {
                context: format!("observation of length {} for obs_dim {}", obs.len(), self.model.obs_dim()),
            });
        }
        let sd = self.model.state_dim();
        let mut pots = Vec::with_capacity(self.n2);
        for j in 0..self.n2 {
            let g = self.model.potential(self.step, &self.theta, &self.states[j * sd..(j + 1) * sd], obs);
            if !g.is_finite() || g < 0.0 {
                return Err(Error::NonFinitePotential { step: self.step, index: j, value: g });
            }
            pots.push(g);
        }
        if pots.iter().all(|&g| g == 0.0) {
            return Err(Error::Extinction { level: Level::Inner, step: self.step });
        }
        Ok(BootstrapStepCache { step: self.step, pots })
    }

    /// Per-step estimates. The filter is a single island: potential summaries
    /// are over the one population, `island_ess` is identically 1, and the
    /// environment marginals are the current point value.
    pub fn estimates(&self, cache: &BootstrapStepCache) -> StepEstimates {
        let pd = self.model.param_dim();
        let sd = self.model.state_dim();
        let pot_mean = cache.pots.iter().sum::<f64>() / self.n2 as f64;
        let pot_min = cache.pots.iter().cloned().fold(f64::INFINITY, f64::min);
        let pot_max = cache.pots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (state_filtered_mean, state_filtered_var) = weighted_marginals(&self.states, sd, &cache.pots);
        let (state_predictor_mean, state_predictor_var) = flat_marginals(&self.states, sd);
        StepEstimates {
            step: cache.step,
            island_ess: 1.0,
            inner_ess_mean: Some(ess(&cache.pots)),
            pot_mean,
            pot_min,
            pot_max,
            log_norm_increment: pot_mean.ln(),
            param_filtered_mean: self.theta.clone(),
            param_filtered_var: vec![0.0; pd],
            param_predictor_mean: self.theta.clone(),
            param_predictor_var: vec![0.0; pd],
            state_filtered_mean,
            state_filtered_var,
            state_predictor_mean,
            state_predictor_var,
        }
    }

    /// Advance one step: select particles by potential, mutate the environment
    /// through the parameter kernel, and mutate the selected particles under
    /// the new environment.
    pub fn step(&mut self, cache: &BootstrapStepCache) -> Result<()> {
        if cache.step != self.step {
            return Err(Error::InvalidArgument(format!(
                "step cache for time {} applied at time {}",
                cache.step, self.step
            )));
        }
        let probs = boltzmann_gibbs(&cache.pots).map_err(|e| match e {
            Error::WeightsAllZero => Error::Extinction { level: Level::Inner, step: self.step },
            other => other,
        })?;
        let node = self
            .stream
            .substream(labels::STEP)
            .substream(self.step as u64)
            .substream(labels::ISLANDS)
            .substream(0);
        let mut inner_sel = node.substream(labels::INNER_SELECT);
        let selection = multinomial_resample(&probs, self.n2, &mut inner_sel)?;
        let sd = self.model.state_dim();
        let mut selected = vec![0.0; self.n2 * sd];
        for (j, &src) in selection.indices.iter().enumerate() {
            selected[j * sd..(j + 1) * sd].copy_from_slice(&self.states[src * sd..(src + 1) * sd]);
        }
        let next = self.step + 1;
        let mut theta = vec![0.0; self.model.param_dim()];
        let mut param_rng = node.substream(labels::PARAM_MUT);
        self.model.sample_param(next, &self.theta, &mut param_rng, &mut theta);
        self.states = mutate(&self.model, next, &theta, &selected, &node.substream(labels::STATE_MUT))?;
        self.theta = theta;
        self.step = next;
        Ok(())
    }
}
