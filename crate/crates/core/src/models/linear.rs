//! Conditionally linear-Gaussian scalar benchmark.
//!
//! Given the environment path, the state–observation pair is an exactly
//! solvable linear-Gaussian chain, so every Monte Carlo estimate produced by
//! the filters can be checked against closed-form Kalman recursions:
//!
//! ```text
//! theta_n = rho * theta_{n-1} + N(0, sigma_param^2)
//! x_n     = a * x_{n-1} + b * theta_n + N(0, sigma_x^2)
//! y_n     = c * x_n + N(0, sigma_y^2)
//! ```
//!
//! Two degenerate corners are used heavily by the test suite: a frozen
//! environment (`rho = 1`, `sigma_param^2 = 0`, point-mass start), under which
//! both filter levels collapse onto one parameter value, and `b = 0`, which
//! decouples the state from the environment entirely.

use serde::{Deserialize, Serialize};

use super::Generative;
use crate::error::{Error, Result};
use crate::fk::FkModel;
use crate::kalman::{GaussianBelief, LinearGaussianModel, StepMatrices};
use crate::rng::RandomStream;
use nalgebra::{DMatrix, DVector};

/// Parameters of the scalar linear benchmark.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    /// State autoregression coefficient.
    pub a: f64,
    /// Environment-to-state coupling.
    pub b: f64,
    /// Observation gain.
    pub c: f64,
    /// Environment autoregression coefficient.
    pub rho: f64,
    /// Environment innovation variance.
    pub sigma_param2: f64,
    /// State innovation variance.
    pub sigma_x2: f64,
    /// Observation noise variance.
    pub sigma_y2: f64,
    /// Mean of the initial environment law.
    pub init_param_mean: f64,
    /// Variance of the initial environment law.
    pub init_param_var: f64,
    /// Mean of the initial state law.
    pub init_state_mean: f64,
    /// Variance of the initial state law.
    pub init_state_var: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            a: 0.9,
            b: 0.5,
            c: 1.0,
            rho: 1.0,
            sigma_param2: 0.0,
            sigma_x2: 1.0,
            sigma_y2: 10.0,
            init_param_mean: 1.0,
            init_param_var: 0.0,
            init_state_mean: 0.0,
            init_state_var: 1.0,
        }
    }
}

/// Scalar conditionally linear-Gaussian model.
#[derive(Clone, Debug)]
pub struct LinearModel {
    params: LinearParams,
    param_sd: f64,
    state_sd: f64,
    obs_sd: f64,
    init_param_sd: f64,
    init_state_sd: f64,
}

impl LinearModel {
    /// Validate parameters and build the model.
    pub fn new(params: LinearParams) -> Result<Self> {
        for (name, v) in [
            ("a", params.a),
            ("b", params.b),
            ("c", params.c),
            ("rho", params.rho),
            ("init_param_mean", params.init_param_mean),
            ("init_state_mean", params.init_state_mean),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [
            ("sigma_param2", params.sigma_param2),
            ("sigma_x2", params.sigma_x2),
            ("init_param_var", params.init_param_var),
            ("init_state_var", params.init_state_var),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !params.sigma_y2.is_finite() || params.sigma_y2 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sigma_y2 must be finite and positive, got {}",
                params.sigma_y2
            )));
        }
        Ok(Self {
            params,
            param_sd: params.sigma_param2.sqrt(),
            state_sd: params.sigma_x2.sqrt(),
            obs_sd: params.sigma_y2.sqrt(),
            init_param_sd: params.init_param_var.sqrt(),
            init_state_sd: params.init_state_var.sqrt(),
        })
    }

    /// Model parameters.
    pub fn params(&self) -> &LinearParams {
        &self.params
    }
}

impl FkModel for LinearModel {
    fn state_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn sample_init_param(&self, rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.normal(self.params.init_param_mean, self.init_param_sd);
    }

    fn sample_init_state(&self, _theta: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.normal(self.params.init_state_mean, self.init_state_sd);
    }

    fn sample_param(&self, _n: usize, prev: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.normal(self.params.rho * prev[0], self.param_sd);
    }

    fn sample_state(&self, _n: usize, theta: &[f64], prev: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.normal(self.params.a * prev[0] + self.params.b * theta[0], self.state_sd);
    }

    fn potential(&self, _n: usize, _theta: &[f64], state: &[f64], obs: &[f64]) -> f64 {
        let r = obs[0] - self.params.c * state[0];
        (-r * r / (2.0 * self.params.sigma_y2)).exp()
    }
}

impl Generative for LinearModel {
    fn sample_obs(&self, _n: usize, _theta: &[f64], state: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.normal(self.params.c * state[0], self.obs_sd);
    }
}

impl LinearGaussianModel for LinearModel {
    fn initial_belief(&self, _theta: &[f64]) -> GaussianBelief {
        GaussianBelief::new(
            DVector::from_element(1, self.params.init_state_mean),
            DMatrix::from_element(1, 1, self.params.init_state_var),
        )
        .expect("scalar variance is positive semidefinite")
    }

    fn step_matrices(&self, _n: usize, theta: &[f64]) -> StepMatrices {
        StepMatrices {
            transition: DMatrix::from_element(1, 1, self.params.a),
            transition_offset: DVector::from_element(1, self.params.b * theta[0]),
            process_noise_map: DMatrix::identity(1, 1),
            process_cov: DMatrix::from_element(1, 1, self.params.sigma_x2),
            observation_map: DMatrix::from_element(1, 1, self.params.c),
            observation_offset: DVector::zeros(1),
            obs_noise_map: DMatrix::identity(1, 1),
            obs_cov: DMatrix::from_element(1, 1, self.params.sigma_y2),
        }
    }
}
