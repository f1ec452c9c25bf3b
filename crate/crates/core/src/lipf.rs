//! The nested island particle filter.
//!
//! The filter tracks the pair (environment, conditional state law) with two
//! particle levels: `n1` islands, each carrying one environment value `theta_i`
//! and an inner population of `n2` state particles quenched on it. A step at
//! time `p` against observation `y_p`:
//!
//! 1. weighs every inner particle with the model potential and every island
//!    with the average potential of its population;
//! 2. multinomially selects `n1` island ancestors by island weight;
//! 3. inside each selected ancestor, multinomially selects `n2` state
//!    particles by inner weight;
//! 4. mutates the ancestor's environment through the parameter kernel, then
//!    mutates the selected states through the state kernel quenched on the
//!    *new* environment value.
//!
//! Selection happens at every step. All randomness is keyed, never sequential
//! across work units: step `p` draws from `STEP/p/ISLAND_SELECT` (island
//! ancestry) and, per destination island slot `i`, from
//! `STEP/p/ISLANDS/i/{INNER_SELECT, PARAM_MUT, STATE_MUT/j}`. Initialization
//! draws from `INIT/ISLANDS/i/{PARAM_INIT, STATE_INIT/j}`. Results for a fixed
//! seed are therefore bit-identical no matter how islands are scheduled across
//! threads, and an `n1 = 1` system reproduces a standalone bootstrap filter
//! draw for draw.

use rayon::prelude::*;

use crate::error::{Error, Level, Result};
use crate::estimates::{ess, flat_marginals, weighted_marginals, StepEstimates};
use crate::fk::{boltzmann_gibbs, mutate, FkModel};
use crate::resampling::multinomial_resample;
use crate::rng::{labels, RandomStream};

/// Potentials of one filter step, computed by [`IslandSystem::evaluate`] and
/// consumed by estimates and selection.
#[derive(Clone, Debug)]
pub struct LipfStepCache {
    step: usize,
    n2: usize,
    inner_pots: Vec<f64>,
    island_pots: Vec<f64>,
}

impl LipfStepCache {
    /// Time index the cache was computed at.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Island potentials: the within-island average of the inner potentials.
    pub fn island_potentials(&self) -> &[f64] {
        &self.island_pots
    }

    /// Inner potentials of island `i`, one per state particle.
    pub fn inner_potentials(&self, i: usize) -> &[f64] {
        &self.inner_pots[i * self.n2..(i + 1) * self.n2]
    }
}

/// The two-level island particle system.
#[derive(Clone, Debug)]
pub struct IslandSystem<M: FkModel> {
    model: M,
    n1: usize,
    n2: usize,
    thetas: Vec<f64>,
    states: Vec<f64>,
    stream: RandomStream,
    step: usize,
}

impl<M: FkModel> IslandSystem<M> {
    /// Initialize `n1` islands of `n2` particles each at time 0: island
    /// environments from the initial parameter law, inner particles from the
    /// initial state law quenched on their island's environment.
    pub fn init(model: M, n1: usize, n2: usize, stream: &RandomStream) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidArgument(format!("particle counts must be positive, got ({n1}, {n2})")));
        }
        let pd = model.param_dim();
        let sd = model.state_dim();
        let init_node = stream.substream(labels::INIT).substream(labels::ISLANDS);
        let islands: Vec<(Vec<f64>, Vec<f64>)> = (0..n1)
            .into_par_iter()
            .map(|i| {
                let island = init_node.substream(i as u64);
                let mut theta = vec![0.0; pd];
                let mut param_rng = island.substream(labels::PARAM_INIT);
                model.sample_init_param(&mut param_rng, &mut theta);
                let state_node = island.substream(labels::STATE_INIT);
                let mut states = vec![0.0; n2 * sd];
                for j in 0..n2 {
                    let mut rng = state_node.substream(j as u64);
                    model.sample_init_state(&theta, &mut rng, &mut states[j * sd..(j + 1) * sd]);
                }
                (theta, states)
            })
            .collect();
        let mut thetas = Vec::with_capacity(n1 * pd);
        let mut states = Vec::with_capacity(n1 * n2 * sd);
        for (theta, isl_states) in islands {
            thetas.extend_from_slice(&theta);
            states.extend_from_slice(&isl_states);
        }
        Ok(Self { model, n1, n2, thetas, states, stream: stream.clone(), step: 0 })
    }

    /// Number of islands.
    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Inner particles per island.
    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Current time index.
    pub fn step_index(&self) -> usize {
        self.step
    }

    /// The model driving the filter.
    pub fn model(&self) -> &M {
        &self.model
    }

    /// Environment value of island `i`.
    pub fn island_theta(&self, i: usize) -> &[f64] {
        let pd = self.model.param_dim();
        &self.thetas[i * pd..(i + 1) * pd]
    }

    /// Inner particles of island `i`, flat `(n2 x state_dim)`.
    pub fn inner_states(&self, i: usize) -> &[f64] {
        let sd = self.model.state_dim();
        let w = self.n2 * sd;
        &self.states[i * w..(i + 1) * w]
    }

    /// Evaluate all potentials against the observation at the current step.
    ///
    /// Errors with [`Error::Extinction`] at the island level when every island
    /// potential vanishes, and with [`Error::NonFinitePotential`] when the
    /// model emits a NaN, infinite, or negative potential (the index reported
    /// is the flat particle index `i * n2 + j`).
    pub fn evaluate(&self, obs: &[f64]) -> Result<LipfStepCache> {
        if obs.len() != self.model.obs_dim() {
            return Err(Error::DimensionMismatch {
                context: format!("observation of length {} for obs_dim {}", obs.len(), self.model.obs_dim()),
            });
        }
        let sd = self.model.state_dim();
        let n2 = self.n2;
        let step = self.step;
        let rows: Vec<Vec<f64>> = (0..self.n1)
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let theta = self.island_theta(i);
                let states = self.inner_states(i);
                let mut row = Vec::with_capacity(n2);
                for j in 0..n2 {
                    let g = self.model.potential(step, theta, &states[j * sd..(j + 1) * sd], obs);
                    if !g.is_finite() || g < 0.0 {
                        return Err(Error::NonFinitePotential { step, index: i * n2 + j, value: g });
                    }
                    row.push(g);
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let mut inner_pots = Vec::with_capacity(self.n1 * n2);
        let mut island_pots = Vec::with_capacity(self.n1);
        for row in rows {
            let mut sum = 0.0;
            for &g in &row {
                sum += g;
            }
            island_pots.push(sum / n2 as f64);
            inner_pots.extend_from_slice(&row);
        }
        if island_pots.iter().all(|&g| g == 0.0) {
            return Err(Error::Extinction { level: Level::Island, step });
        }
        Ok(LipfStepCache { step, n2, inner_pots, island_pots })
    }

    /// Per-step estimates from the cached potentials.
    ///
    /// Predictor moments weigh all particles (and islands) equally; filtered
    /// moments weigh each inner particle by its potential (equivalently:
    /// islands by island potential, particles within an island by inner
    /// potential) and each island environment by its island potential.
    pub fn estimates(&self, cache: &LipfStepCache) -> StepEstimates {
        let pd = self.model.param_dim();
        let sd = self.model.state_dim();
        let pots = &cache.island_pots;
        let pot_mean = pots.iter().sum::<f64>() / self.n1 as f64;
        let pot_min = pots.iter().cloned().fold(f64::INFINITY, f64::min);
        let pot_max = pots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let inner_ess_mean =
            (0..self.n1).map(|i| ess(cache.inner_potentials(i))).sum::<f64>() / self.n1 as f64;
        let (param_filtered_mean, param_filtered_var) = weighted_marginals(&self.thetas, pd, pots);
        let (param_predictor_mean, param_predictor_var) = flat_marginals(&self.thetas, pd);
        let (state_filtered_mean, state_filtered_var) = weighted_marginals(&self.states, sd, &cache.inner_pots);
        let (state_predictor_mean, state_predictor_var) = flat_marginals(&self.states, sd);
        StepEstimates {
            step: cache.step,
            island_ess: ess(pots),
            inner_ess_mean: Some(inner_ess_mean),
            pot_mean,
            pot_min,
            pot_max,
            log_norm_increment: pot_mean.ln(),
            param_filtered_mean,
            param_filtered_var,
            param_predictor_mean,
            param_predictor_var,
            state_filtered_mean,
            state_filtered_var,
            state_predictor_mean,
            state_predictor_var,
        }
    }

    /// Filtered mean of a scalar function of the state,
    /// `sum_ij G_ij f(x_ij) / sum_ij G_ij`.
    pub fn filtered_state_mean_of<F>(&self, cache: &LipfStepCache, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        if cache.step != self.step {
            return Err(Error::InvalidArgument(format!(
                "step cache for time {} used at time {}",
                cache.step, self.step
            )));
        }
        let sd = self.model.state_dim();
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, state) in self.states.chunks_exact(sd).enumerate() {
            let w = cache.inner_pots[j];
            let v = f(state);
            if !v.is_finite() {
                return Err(Error::NonFinite { context: format!("test function value at particle {j}") });
            }
            num += w * v;
            den += w;
        }
        Ok(num / den)
    }

    /// Predictor mean of a scalar function of the state (flat average over all
    /// `n1 * n2` particles).
    pub fn predictor_state_mean_of<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        let sd = self.model.state_dim();
        let mut acc = 0.0;
        for (j, state) in self.states.chunks_exact(sd).enumerate() {
            let v = f(state);
            if !v.is_finite() {
                return Err(Error::NonFinite { context: format!("test function value at particle {j}") });
            }
            acc += v;
        }
        Ok(acc / (self.n1 * self.n2) as f64)
    }

    /// Advance the system one step: select islands, select within the chosen
    /// ancestors, mutate environments, and mutate states under the new
    /// environments.
    pub fn step(&mut self, cache: &LipfStepCache) -> Result<()> {
        if cache.step != self.step {
            return Err(Error::InvalidArgument(format!(
                "step cache for time {} applied at time {}",
                cache.step, self.step
            )));
        }
        let island_probs = boltzmann_gibbs(&cache.island_pots).map_err(|e| match e {
            Error::WeightsAllZero => Error::Extinction { level: Level::Island, step: self.step },
            other => other,
        })?;
        let step_node = self.stream.substream(labels::STEP).substream(self.step as u64);
        let mut sel_stream = step_node.substream(labels::ISLAND_SELECT);
        let selection = multinomial_resample(&island_probs, self.n1, &mut sel_stream)?;
        let islands_node = step_node.substream(labels::ISLANDS);
        let pd = self.model.param_dim();
        let sd = self.model.state_dim();
        let n2 = self.n2;
        let next = self.step + 1;
        let new_islands: Vec<(Vec<f64>, Vec<f64>)> = selection
            .indices
            .par_iter()
            .enumerate()
            .map(|(i, &ancestor)| -> Result<(Vec<f64>, Vec<f64>)> {
                let node = islands_node.substream(i as u64);
                let inner_probs = boltzmann_gibbs(cache.inner_potentials(ancestor)).map_err(|e| match e {
                    Error::WeightsAllZero => Error::Extinction { level: Level::Inner, step: cache.step },
                    other => other,
                })?;
                let mut inner_sel = node.substream(labels::INNER_SELECT);
                let inner = multinomial_resample(&inner_probs, n2, &mut inner_sel)?;
                let parent_states = self.inner_states(ancestor);
                let mut selected = vec![0.0; n2 * sd];
                for (j, &src) in inner.indices.iter().enumerate() {
                    selected[j * sd..(j + 1) * sd].copy_from_slice(&parent_states[src * sd..(src + 1) * sd]);
                }
                let mut theta = vec![0.0; pd];
                let mut param_rng = node.substream(labels::PARAM_MUT);
                self.model.sample_param(next, self.island_theta(ancestor), &mut param_rng, &mut theta);
                let states = mutate(&self.model, next, &theta, &selected, &node.substream(labels::STATE_MUT))?;
                Ok((theta, states))
            })
            .collect::<Result<_>>()?;
        let mut thetas = Vec::with_capacity(self.n1 * pd);
        let mut states = Vec::with_capacity(self.n1 * n2 * sd);
        for (theta, isl_states) in new_islands {
            thetas.extend_from_slice(&theta);
            states.extend_from_slice(&isl_states);
        }
        self.thetas = thetas;
        self.states = states;
        self.step = next;
        Ok(())
    }
}
