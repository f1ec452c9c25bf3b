//! Benchmark state-space models and a ground-truth simulator.

mod growth;
mod linear;
mod mobile;

pub use growth::{GrowthModel, GrowthParams};
pub use linear::{LinearModel, LinearParams};
pub use mobile::{force_orientation, force_strength, MobileModel, MobileParams};

use crate::error::{Error, Result};
use crate::fk::FkModel;
use crate::rng::{labels, RandomStream};

/// A model that can also simulate its own observations, making it usable for
/// generating ground truth.
pub trait Generative: FkModel {
    /// Draw `y_n` from the observation law given `(theta_n, x_n)`.
    fn sample_obs(&self, n: usize, theta: &[f64], state: &[f64], rng: &mut RandomStream, out: &mut [f64]);
}

/// A simulated ground-truth path: parameters, states, and observations at
/// times `0..=horizon`, stored flat.
#[derive(Clone, Debug)]
pub struct Trajectory {
    horizon: usize,
    param_dim: usize,
    state_dim: usize,
    obs_dim: usize,
    thetas: Vec<f64>,
    states: Vec<f64>,
    observations: Vec<f64>,
}

impl Trajectory {
    /// Number of transitions; the trajectory holds `horizon + 1` time points.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Parameter dimension.
    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    /// State dimension.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Observation dimension.
    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// Parameter vector at time `n`.
    pub fn theta(&self, n: usize) -> &[f64] {
        &self.thetas[n * self.param_dim..(n + 1) * self.param_dim]
    }

    /// State vector at time `n`.
    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.state_dim..(n + 1) * self.state_dim]
    }

    /// Observation vector at time `n`.
    pub fn obs(&self, n: usize) -> &[f64] {
        &self.observations[n * self.obs_dim..(n + 1) * self.obs_dim]
    }

    /// All observations, flat `(horizon + 1) x obs_dim`.
    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// Build a trajectory directly from flat storage (used when loading
    /// observations from disk; states/params may be empty if unknown).
    pub fn from_parts(
        horizon: usize,
        param_dim: usize,
        state_dim: usize,
        obs_dim: usize,
        thetas: Vec<f64>,
        states: Vec<f64>,
        observations: Vec<f64>,
    ) -> Result<Self> {
        let points = horizon + 1;
        if observations.len() != points * obs_dim {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "{} observation values for horizon {horizon} and obs_dim {obs_dim}",
                    observations.len()
                ),
            });
        }
        let check = |len: usize, dim: usize, what: &str| -> Result<()> {
            if len != 0 && len != points * dim {
                return Err(Error::DimensionMismatch { context: format!("{len} {what} values for horizon {horizon}") });
            }
            Ok(())
        };
        check(thetas.len(), param_dim, "parameter")?;
        check(states.len(), state_dim, "state")?;
        Ok(Self { horizon, param_dim, state_dim, obs_dim, thetas, states, observations })
    }

    /// Whether ground-truth states/parameters are present (absent when the
    /// trajectory was reconstructed from observations alone).
    pub fn has_truth(&self) -> bool {
        !self.states.is_empty() && !self.thetas.is_empty()
    }

    /// Whether a parameter path is present (conditional filters require one).
    pub fn has_params(&self) -> bool {
        !self.thetas.is_empty()
    }
}

/// Simulate a ground-truth path of length `horizon + 1` from the model.
///
/// Draws come from `stream.substream(labels::SIMULATION)`, sequentially in
/// time order (theta, state, observation per step), so a trajectory is a pure
/// function of `(model, horizon, stream identity)`.
pub fn simulate(model: &dyn Generative, horizon: usize, stream: &RandomStream) -> Trajectory {
    let (pd, sd, od) = (model.param_dim(), model.state_dim(), model.obs_dim());
    let points = horizon + 1;
    let mut thetas = vec![0.0; points * pd];
    let mut states = vec![0.0; points * sd];
    let mut observations = vec![0.0; points * od];
    let mut rng = stream.substream(labels::SIMULATION);

    model.sample_init_param(&mut rng, &mut thetas[0..pd]);
    {
        let (theta0, _) = thetas.split_at(pd);
        model.sample_init_state(theta0, &mut rng, &mut states[0..sd]);
        model.sample_obs(0, theta0, &states[0..sd], &mut rng, &mut observations[0..od]);
    }
    for n in 1..points {
        let (prev_t, cur_t) = thetas.split_at_mut(n * pd);
        model.sample_param(n, &prev_t[(n - 1) * pd..], &mut rng, &mut cur_t[..pd]);
        let theta_n = &cur_t[..pd];
        let (prev_s, cur_s) = states.split_at_mut(n * sd);
        model.sample_state(n, theta_n, &prev_s[(n - 1) * sd..], &mut rng, &mut cur_s[..sd]);
        model.sample_obs(n, theta_n, &cur_s[..sd], &mut rng, &mut observations[n * od..(n + 1) * od]);
    }
    Trajectory { horizon, param_dim: pd, state_dim: sd, obs_dim: od, thetas, states, observations }
}
