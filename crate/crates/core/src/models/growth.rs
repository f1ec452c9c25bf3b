//! Scalar growth model with an oscillating random environment.
//!
//! The state follows the classic nonlinear growth map driven by an additive
//! environment term, and the environment is resampled around a cosine drift at
//! every step (its kernel does not depend on the previous value):
//!
//! ```text
//! theta_n = amp * cos(freq * n) + N(0, sigma_theta^2)
//! x_n     = x_{n-1}/2 + 25 x_{n-1} / (1 + x_{n-1}^2) + theta_n + N(0, sigma_x^2)
//! y_n     = x_n + N(0, sigma_y^2)
//! ```
//!
//! with `theta_0 ~ N(0, sigma_theta^2)` and `x_0 ~ N(0, sigma_x^2)`.

use serde::{Deserialize, Serialize};

use super::Generative;
use crate::error::{Error, Result};
use crate::fk::FkModel;
use crate::rng::RandomStream;

/// Parameters of the growth model. Defaults are the benchmark values.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthParams {
    /// Environment noise variance.
    pub sigma_theta2: f64,
    /// State noise variance.
    pub sigma_x2: f64,
    /// Observation noise variance.
    pub sigma_y2: f64,
    /// Amplitude of the environment's cosine drift.
    pub theta_amp: f64,
    /// Angular frequency of the environment's cosine drift.
    pub theta_freq: f64,
}

impl Default for GrowthParams {
    fn default() -> Self {
        Self { sigma_theta2: 1.0, sigma_x2: 1.0, sigma_y2: 10.0, theta_amp: 8.0, theta_freq: 1.2 }
    }
}

/// The growth model (scalar state, scalar environment, scalar observation).
#[derive(Clone, Debug)]
pub struct GrowthModel {
    params: GrowthParams,
    sigma_theta: f64,
    sigma_x: f64,
    sigma_y: f64,
}

impl GrowthModel {
    /// Validate parameters and build the model. Noise variances must be
    /// nonnegative and the observation variance positive (it scales the
    /// potential).
    pub fn new(params: GrowthParams) -> Result<Self> {
        for (name, v) in [
            ("sigma_theta2", params.sigma_theta2),
            ("sigma_x2", params.sigma_x2),
            ("sigma_y2", params.sigma_y2),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be a finite nonnegative number, got {v}")));
            }
        }
        if params.sigma_y2 == 0.0 {
            return Err(Error::InvalidArgument("sigma_y2 must be positive".into()));
        }
        Ok(Self {
            params,
            sigma_theta: params.sigma_theta2.sqrt(),
            sigma_x: params.sigma_x2.sqrt(),
            sigma_y: params.sigma_y2.sqrt(),
        })
    }

    /// Model parameters.
    pub fn params(&self) -> &GrowthParams {
        &self.params
    }

    /// Deterministic part of the environment at time `n`.
    pub fn theta_mean(&self, n: usize) -> f64 {
        self.params.theta_amp * (self.params.theta_freq * n as f64).cos()
    }

    /// Deterministic part of the state map (before the environment shift).
    pub fn drift(&self, x: f64) -> f64 {
        x / 2.0 + 25.0 * x / (1.0 + x * x)
    }

    /// Environment noise standard deviation.
    pub fn sigma_theta(&self) -> f64 {
        self.sigma_theta
    }

    /// State noise standard deviation.
    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    /// Observation noise standard deviation.
    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }
}

impl FkModel for GrowthModel {
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
        out[0] = rng.normal(0.0, self.sigma_theta);
    }

    fn sample_init_state(&self, _theta: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.normal(0.0, self.sigma_x);
    }

    fn sample_param(&self, n: usize, _prev: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        // The kernel ignores the previous value: fresh draw around the drift.
        out[0] = rng.normal(self.theta_mean(n), self.sigma_theta);
    }

    fn sample_state(&self, _n: usize, theta: &[f64], prev: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.normal(self.drift(prev[0]) + theta[0], self.sigma_x);
    }

    fn potential(&self, _n: usize, _theta: &[f64], state: &[f64], obs: &[f64]) -> f64 {
        let r = obs[0] - state[0];
        (-r * r / (2.0 * self.params.sigma_y2)).exp()
    }
}

impl Generative for GrowthModel {
    fn sample_obs(&self, _n: usize, _theta: &[f64], state: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.normal(state[0], self.sigma_y);
    }
}
