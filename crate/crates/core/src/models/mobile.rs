//! Planar mobile tracked under an unknown drifting force field.
//!
//! The state is `(x1, x2, v)`: planar position plus scalar speed along a known
//! course `alpha`. The environment `theta = (theta1, theta2)` is a force
//! vector perturbing the position. Per step of length `dt`:
//!
//! ```text
//! theta_n = (cos theta1_{n-1}, sin theta2_{n-1}) + N(0, Sigma_theta)
//! x_n     = x_{n-1} + v_{n-1} (cos alpha, sin alpha) dt + theta_n dt + N(0, Sigma_x)
//! v_n     = v_{n-1} + J_n,   J_n a compound-Poisson jump:
//!           with probability 1 - exp(-jump_rate) a N(0, jump_var) jump, else 0
//! y_n     = (x1_n, x2_n, v_n) + N(0, Sigma_y)
//! ```
//!
//! The speed noise is deliberately non-Gaussian; the Kalman-island baseline
//! replaces it by its matched-variance Gaussian, which is exactly what the
//! nested particle filter does not have to do.

use serde::{Deserialize, Serialize};

use super::Generative;
use crate::error::{Error, Result};
use crate::fk::FkModel;
use crate::kalman::{GaussianBelief, LinearGaussianModel, StepMatrices};
use crate::rng::RandomStream;
use nalgebra::{DMatrix, DVector};

/// Parameters of the mobile model. Defaults are the benchmark values.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobileParams {
    /// Step length in seconds.
    pub dt: f64,
    /// Course angle of the speed contribution.
    pub alpha: f64,
    /// Diagonal of the force-noise covariance.
    pub theta_cov_diag: [f64; 2],
    /// Diagonal of the per-step position noise covariance.
    pub process_cov_diag: [f64; 2],
    /// Diagonal of the initial position covariance.
    pub init_pos_cov_diag: [f64; 2],
    /// Diagonal of the observation noise covariance `(x1, x2, v)`.
    pub obs_cov_diag: [f64; 3],
    /// Poisson rate of speed jumps per step; the per-step jump probability is
    /// `1 - exp(-jump_rate)`.
    pub jump_rate: f64,
    /// Variance of a speed jump, given one occurs.
    pub jump_var: f64,
    /// Mean of the initial speed law.
    pub init_speed_mean: f64,
    /// Variance of the initial speed law.
    pub init_speed_var: f64,
}

impl Default for MobileParams {
    fn default() -> Self {
        Self {
            dt: 15.0,
            alpha: std::f64::consts::FRAC_PI_2,
            theta_cov_diag: [1.0, 1.0],
            process_cov_diag: [1.5, 1.5],
            init_pos_cov_diag: [1.5, 1.5],
            obs_cov_diag: [0.5, 0.5, 1.0],
            jump_rate: 0.03,
            jump_var: 3.0,
            init_speed_mean: 0.0,
            init_speed_var: 1.0,
        }
    }
}

/// The mobile model (state `(x1, x2, v)`, environment `(theta1, theta2)`,
/// observation `(x1, x2, v)` with additive noise).
#[derive(Clone, Debug)]
pub struct MobileModel {
    params: MobileParams,
    cos_alpha: f64,
    sin_alpha: f64,
    theta_sd: [f64; 2],
    pos_sd: [f64; 2],
    init_pos_sd: [f64; 2],
    obs_sd: [f64; 3],
    jump_prob: f64,
    jump_sd: f64,
    init_speed_sd: f64,
}

impl MobileModel {
    /// Validate parameters and build the model.
    pub fn new(params: MobileParams) -> Result<Self> {
        let check = |name: &str, v: f64, strictly_positive: bool| -> Result<()> {
            if !v.is_finite() || v < 0.0 || (strictly_positive && v == 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be a finite positive number, got {v}")));
            }
            Ok(())
        };
        for (i, &v) in params.theta_cov_diag.iter().enumerate() {
            check(&format!("theta_cov_diag[{i}]"), v, false)?;
        }
        for (i, &v) in params.process_cov_diag.iter().enumerate() {
            check(&format!("process_cov_diag[{i}]"), v, false)?;
        }
        for (i, &v) in params.init_pos_cov_diag.iter().enumerate() {
            check(&format!("init_pos_cov_diag[{i}]"), v, false)?;
        }
        for (i, &v) in params.obs_cov_diag.iter().enumerate() {
            check(&format!("obs_cov_diag[{i}]"), v, true)?;
        }
        check("jump_rate", params.jump_rate, false)?;
        check("jump_var", params.jump_var, false)?;
        check("init_speed_var", params.init_speed_var, false)?;
        if !params.dt.is_finite() || params.dt <= 0.0 {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", params.dt)));
        }
        Ok(Self {
            params,
            cos_alpha: params.alpha.cos(),
            sin_alpha: params.alpha.sin(),
            theta_sd: params.theta_cov_diag.map(f64::sqrt),
            pos_sd: params.process_cov_diag.map(f64::sqrt),
            init_pos_sd: params.init_pos_cov_diag.map(f64::sqrt),
            obs_sd: params.obs_cov_diag.map(f64::sqrt),
            jump_prob: -(-params.jump_rate).exp_m1(),
            jump_sd: params.jump_var.sqrt(),
            init_speed_sd: params.init_speed_var.sqrt(),
        })
    }

    /// Model parameters.
    pub fn params(&self) -> &MobileParams {
        &self.params
    }

    /// Per-step probability that a speed jump occurs.
    pub fn jump_prob(&self) -> f64 {
        self.jump_prob
    }

    /// Variance of the compound-Poisson speed increment (used by the Gaussian
    /// baseline): `P(jump) * jump_var`.
    pub fn matched_jump_var(&self) -> f64 {
        self.jump_prob * self.params.jump_var
    }
}

impl FkModel for MobileModel {
    fn state_dim(&self) -> usize {
        3
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        3
    }

    fn sample_init_param(&self, rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.normal(0.0, self.theta_sd[0]);
        out[1] = rng.normal(0.0, self.theta_sd[1]);
    }

    fn sample_init_state(&self, _theta: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.normal(0.0, self.init_pos_sd[0]);
        out[1] = rng.normal(0.0, self.init_pos_sd[1]);
        out[2] = rng.normal(self.params.init_speed_mean, self.init_speed_sd);
    }

    fn sample_param(&self, _n: usize, prev: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        out[0] = rng.normal(prev[0].cos(), self.theta_sd[0]);
        out[1] = rng.normal(prev[1].sin(), self.theta_sd[1]);
    }

    fn sample_state(&self, _n: usize, theta: &[f64], prev: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        let dt = self.params.dt;
        out[0] = rng.normal(prev[0] + prev[2] * self.cos_alpha * dt + theta[0] * dt, self.pos_sd[0]);
        out[1] = rng.normal(prev[1] + prev[2] * self.sin_alpha * dt + theta[1] * dt, self.pos_sd[1]);
        let jump = if rng.bernoulli(self.jump_prob) { rng.normal(0.0, self.jump_sd) } else { 0.0 };
        out[2] = prev[2] + jump;
    }

    fn potential(&self, _n: usize, _theta: &[f64], state: &[f64], obs: &[f64]) -> f64 {
        let mut q = 0.0;
        for k in 0..3 {
            let r = obs[k] - state[k];
            q += r * r / self.params.obs_cov_diag[k];
        }
        (-q / 2.0).exp()
    }
}

impl Generative for MobileModel {
    fn sample_obs(&self, _n: usize, _theta: &[f64], state: &[f64], rng: &mut RandomStream, out: &mut [f64]) {
        for k in 0..3 {
            out[k] = rng.normal(state[k], self.obs_sd[k]);
        }
    }
}

impl LinearGaussianModel for MobileModel {
    fn initial_belief(&self, _theta: &[f64]) -> GaussianBelief {
        let mean = DVector::from_vec(vec![0.0, 0.0, self.params.init_speed_mean]);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![
            self.params.init_pos_cov_diag[0],
            self.params.init_pos_cov_diag[1],
            self.params.init_speed_var,
        ]));
        GaussianBelief::new(mean, cov).expect("diagonal covariance is positive semidefinite")
    }

    fn step_matrices(&self, _n: usize, theta: &[f64]) -> StepMatrices {
        let dt = self.params.dt;
        let transition = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, self.cos_alpha * dt, 0.0, 1.0, self.sin_alpha * dt, 0.0, 0.0, 1.0],
        );
        let transition_offset = DVector::from_vec(vec![theta[0] * dt, theta[1] * dt, 0.0]);
        let process_cov = DMatrix::from_diagonal(&DVector::from_vec(vec![
            self.params.process_cov_diag[0],
            self.params.process_cov_diag[1],
            self.matched_jump_var(),
        ]));
        let obs_cov = DMatrix::from_diagonal(&DVector::from_vec(self.params.obs_cov_diag.to_vec()));
        StepMatrices {
            transition,
            transition_offset,
            process_noise_map: DMatrix::identity(3, 3),
            process_cov,
            observation_map: DMatrix::identity(3, 3),
            observation_offset: DVector::zeros(3),
            obs_noise_map: DMatrix::identity(3, 3),
            obs_cov,
        }
    }
}

/// Euclidean norm of the force vector.
pub fn force_strength(theta: &[f64]) -> f64 {
    theta[0].hypot(theta[1])
}

/// Orientation of the force vector, `atan2(theta2, theta1)`, in `(-pi, pi]`.
pub fn force_orientation(theta: &[f64]) -> f64 {
    theta[1].atan2(theta[0])
}
