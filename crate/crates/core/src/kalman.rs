//! Kalman primitives and the interacting Kalman island filter.
//!
//! For models whose quenched state/observation pair is linear-Gaussian given
//! the environment, the inner particle cloud of the nested filter can be
//! replaced by its exact conditional law: a Gaussian belief per island,
//! propagated by Kalman prediction/correction. Islands are still selected by
//! their marginal likelihood of the current observation, mutated through the
//! environment kernel, and re-predicted under the mutated environment.
//!
//! The island weight used here is the predictor-marginalized model potential
//! `integral of G_n(theta, x) dN(x; m, Sigma) = sqrt(det R / det S) *
//! exp(-r' S^{-1} r / 2)` with innovation `r`, innovation covariance
//! `S = C Sigma C' + R`, and effective observation noise `R = D Sigma_Y D'` —
//! consistent, island by island, with the linear-space potentials particle
//! filters compute, so the two filter families are directly comparable.
//!
//! Corrections use the Joseph form `(I - KC) Sigma (I - KC)' + K R K'`, which
//! preserves positive semidefiniteness under roundoff.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::estimates::{ess, flat_marginals, weighted_marginals, StepEstimates};
use crate::fk::{boltzmann_gibbs, FkModel};
use crate::models::Trajectory;
use crate::resampling::multinomial_resample;
use crate::rng::{labels, RandomStream};

/// A Gaussian law `N(mean, cov)` over a state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianBelief {
    /// Build a belief, validating dimensions, finiteness, and symmetry.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: format!("{}x{} covariance for a mean of length {d}", cov.nrows(), cov.ncols()),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) || cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "Gaussian belief moments".into() });
        }
        let scale = cov.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for i in 0..d {
            for j in (i + 1)..d {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-9 * (1.0 + scale) {
                    return Err(Error::InvalidArgument(format!(
                        "covariance is not symmetric at ({i}, {j}): {} vs {}",
                        cov[(i, j)],
                        cov[(j, i)]
                    )));
                }
            }
        }
        Ok(Self { mean, cov })
    }

    /// Internal constructor for moments produced by the filter itself.
    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        debug_assert_eq!(mean.len(), cov.nrows());
        debug_assert_eq!(cov.nrows(), cov.ncols());
        Self { mean, cov }
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Mean vector.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Covariance matrix.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// The matrices of one linear-Gaussian step, quenched on an environment value:
///
/// ```text
/// x_n = transition x_{n-1} + transition_offset + process_noise_map w_n,
///       w_n ~ N(0, process_cov)
/// y_n = observation_map x_n + observation_offset + obs_noise_map v_n,
///       v_n ~ N(0, obs_cov)
/// ```
#[derive(Clone, Debug)]
pub struct StepMatrices {
    /// State transition matrix (`d x d`).
    pub transition: DMatrix<f64>,
    /// Additive state drift, carrying the environment's contribution (`d`).
    pub transition_offset: DVector<f64>,
    /// Map from process noise into the state space (`d x q`).
    pub process_noise_map: DMatrix<f64>,
    /// Process noise covariance (`q x q`).
    pub process_cov: DMatrix<f64>,
    /// Observation matrix (`m x d`).
    pub observation_map: DMatrix<f64>,
    /// Additive observation offset (`m`).
    pub observation_offset: DVector<f64>,
    /// Map from observation noise into the observation space (`m x r`).
    pub obs_noise_map: DMatrix<f64>,
    /// Observation noise covariance (`r x r`).
    pub obs_cov: DMatrix<f64>,
}

impl StepMatrices {
    /// Process noise covariance as seen by the state,
    /// `process_noise_map process_cov process_noise_map'`.
    pub fn effective_process_cov(&self) -> DMatrix<f64> {
        &self.process_noise_map * &self.process_cov * self.process_noise_map.transpose()
    }

    /// Observation noise covariance as seen by the observation,
    /// `obs_noise_map obs_cov obs_noise_map'`.
    pub fn effective_obs_cov(&self) -> DMatrix<f64> {
        &self.obs_noise_map * &self.obs_cov * self.obs_noise_map.transpose()
    }
}

/// A model that is linear-Gaussian in the state given the environment, in the
/// form consumed by Kalman-based filters.
///
/// `step_matrices(n, theta)` returns the matrices moving the state from time
/// `n - 1` to `n` and observing at time `n`, quenched on `theta_n = theta`.
pub trait LinearGaussianModel: Sync {
    /// The initial state law given `theta_0`.
    fn initial_belief(&self, theta: &[f64]) -> GaussianBelief;
    /// The step's transition/observation matrices given `theta_n`.
    fn step_matrices(&self, n: usize, theta: &[f64]) -> StepMatrices;
}

/// Kalman prediction: push a belief through the linear state dynamics.
pub fn kalman_predict(belief: &GaussianBelief, mats: &StepMatrices) -> GaussianBelief {
    debug_assert_eq!(mats.transition.ncols(), belief.dim());
    let mean = &mats.transition * belief.mean() + &mats.transition_offset;
    let mut cov = &mats.transition * belief.cov() * mats.transition.transpose() + mats.effective_process_cov();
    symmetrize(&mut cov);
    GaussianBelief::from_parts(mean, cov)
}

/// Innovation pieces shared by correction and island weighting.
struct Innovation {
    residual: DVector<f64>,
    chol_s: Cholesky<f64, Dyn>,
    lndet_s: f64,
}

fn innovation(belief: &GaussianBelief, mats: &StepMatrices, obs: &[f64]) -> Result<Innovation> {
    let c = &mats.observation_map;
    if obs.len() != c.nrows() || belief.dim() != c.ncols() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "observation of length {} against a {}x{} observation map and state dimension {}",
                obs.len(),
                c.nrows(),
                c.ncols(),
                belief.dim()
            ),
        });
    }
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "observation vector".into() });
    }
    let mut s = c * belief.cov() * c.transpose() + mats.effective_obs_cov();
    symmetrize(&mut s);
    let chol_s = Cholesky::new(s.clone())
        .ok_or_else(|| Error::SingularInnovation { cond: condition_number(&s) })?;
    let lndet_s = ln_det(&chol_s);
    let residual = DVector::from_column_slice(obs) - (c * belief.mean() + &mats.observation_offset);
    Ok(Innovation { residual, chol_s, lndet_s })
}

/// Kalman correction in Joseph form.
///
/// Errors with [`Error::SingularInnovation`] when the innovation covariance
/// `S = C Sigma C' + R` is not positive definite.
pub fn kalman_correct(belief: &GaussianBelief, mats: &StepMatrices, obs: &[f64]) -> Result<GaussianBelief> {
    let inn = innovation(belief, mats, obs)?;
    correct_from(belief, mats, &inn)
}

fn correct_from(belief: &GaussianBelief, mats: &StepMatrices, inn: &Innovation) -> Result<GaussianBelief> {
    let c = &mats.observation_map;
    let d = belief.dim();
    // K = Sigma C' S^{-1}; computed as (S^{-1} C Sigma)' since S and Sigma are
    // symmetric.
    let gain = inn.chol_s.solve(&(c * belief.cov())).transpose();
    let mean = belief.mean() + &gain * &inn.residual;
    let i_kc = DMatrix::identity(d, d) - &gain * c;
    let mut cov =
        &i_kc * belief.cov() * i_kc.transpose() + &gain * mats.effective_obs_cov() * gain.transpose();
    symmetrize(&mut cov);
    if mean.iter().any(|v| !v.is_finite()) || cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "corrected belief moments".into() });
    }
    Ok(GaussianBelief::from_parts(mean, cov))
}

/// Island weight of a Gaussian predictor belief against an observation: the
/// model potential integrated over the belief,
/// `sqrt(det R / det S) exp(-r' S^{-1} r / 2)`.
///
/// Always lies in `[0, 1]` (up to roundoff) since `S >= R`. Requires the
/// effective observation noise `R` to be positive definite.
pub fn gaussian_island_potential(belief: &GaussianBelief, mats: &StepMatrices, obs: &[f64]) -> Result<f64> {
    let inn = innovation(belief, mats, obs)?;
    potential_from(mats, &inn)
}

fn potential_from(mats: &StepMatrices, inn: &Innovation) -> Result<f64> {
    let mut r_eff = mats.effective_obs_cov();
    symmetrize(&mut r_eff);
    let chol_r = Cholesky::new(r_eff).ok_or_else(|| {
        Error::InvalidArgument("observation noise covariance must be positive definite for island weighting".into())
    })?;
    let lndet_r = ln_det(&chol_r);
    let quad = inn.residual.dot(&inn.chol_s.solve(&inn.residual));
    let ln_pot = 0.5 * (lndet_r - inn.lndet_s) - 0.5 * quad;
    let pot = ln_pot.exp();
    if !pot.is_finite() {
        return Err(Error::NonFinite { context: "gaussian island potential".into() });
    }
    Ok(pot)
}

/// Correction and island weight from one innovation factorization.
fn correct_and_weigh(belief: &GaussianBelief, mats: &StepMatrices, obs: &[f64]) -> Result<(GaussianBelief, f64)> {
    let inn = innovation(belief, mats, obs)?;
    let corrected = correct_from(belief, mats, &inn)?;
    let pot = potential_from(mats, &inn)?;
    Ok((corrected, pot))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn ln_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// One step of the exact conditional filter: the state law before and after
/// correcting with the step's observation.
#[derive(Clone, Debug)]
pub struct ConditionalFilterStep {
    /// Law of `x_n` given observations up to `n - 1` and the environment path.
    pub predictor: GaussianBelief,
    /// Law of `x_n` given observations up to `n` and the environment path.
    pub filtered: GaussianBelief,
}

/// Run the exact Kalman filter conditionally on a known environment path.
///
/// The trajectory must carry a parameter path; its observations drive the
/// corrections. Step `n` of the output holds the predictor and filtered laws
/// at time `n`.
pub fn exact_conditional_filter(
    model: &dyn LinearGaussianModel,
    traj: &Trajectory,
) -> Result<Vec<ConditionalFilterStep>> {
    if !traj.has_params() {
        return Err(Error::InvalidArgument(
            "conditional filtering requires a trajectory with a parameter path".into(),
        ));
    }
    let mut out = Vec::with_capacity(traj.horizon() + 1);
    let mut predictor = model.initial_belief(traj.theta(0));
    for n in 0..=traj.horizon() {
        let mats = model.step_matrices(n, traj.theta(n));
        let filtered = kalman_correct(&predictor, &mats, traj.obs(n))?;
        out.push(ConditionalFilterStep { predictor: predictor.clone(), filtered: filtered.clone() });
        if n < traj.horizon() {
            predictor = kalman_predict(&filtered, &model.step_matrices(n + 1, traj.theta(n + 1)));
        }
    }
    Ok(out)
}

/// Potentials and corrected beliefs of one interacting-Kalman step, computed
/// by [`IkfSystem::evaluate`] and consumed by estimates and selection.
#[derive(Clone, Debug)]
pub struct IkfStepCache {
    step: usize,
    island_pots: Vec<f64>,
    corrected: Vec<GaussianBelief>,
}

impl IkfStepCache {
    /// Time index the cache was computed at.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Island potentials (selection weights before normalization).
    pub fn island_potentials(&self) -> &[f64] {
        &self.island_pots
    }

    /// Per-island corrected (filtered) beliefs at this step.
    pub fn corrected_beliefs(&self) -> &[GaussianBelief] {
        &self.corrected
    }
}

/// The interacting Kalman filter: an island system whose inner laws are exact
/// Gaussians.
///
/// Each island carries an environment value and the Gaussian predictor law of
/// the state quenched on that island's environment history. A step weighs
/// islands by the marginalized potential of the current observation, resamples
/// them, corrects the selected ancestors' beliefs, mutates environments
/// through the parameter kernel, and predicts under the mutated environments.
///
/// Randomness is keyed exactly like the nested particle filter: the stream
/// handed to [`IkfSystem::init`] owns the filter; initialization draws come
/// from `INIT/ISLANDS/i/PARAM_INIT` and step `p` draws from
/// `STEP/p/ISLAND_SELECT` and `STEP/p/ISLANDS/i/PARAM_MUT`.
#[derive(Clone, Debug)]
pub struct IkfSystem<M: FkModel + LinearGaussianModel> {
    model: M,
    n1: usize,
    thetas: Vec<f64>,
    beliefs: Vec<GaussianBelief>,
    stream: RandomStream,
    step: usize,
}

impl<M: FkModel + LinearGaussianModel> IkfSystem<M> {
    /// Initialize `n1` islands at time 0 from the model's initial laws.
    pub fn init(model: M, n1: usize, stream: &RandomStream) -> Result<Self> {
        if n1 == 0 {
            return Err(Error::InvalidArgument("island count must be positive".into()));
        }
        let pd = model.param_dim();
        let init_node = stream.substream(labels::INIT).substream(labels::ISLANDS);
        let mut thetas = vec![0.0; n1 * pd];
        let mut beliefs = Vec::with_capacity(n1);
        for i in 0..n1 {
            let island = init_node.substream(i as u64);
            let mut param_rng = island.substream(labels::PARAM_INIT);
            let theta = &mut thetas[i * pd..(i + 1) * pd];
            model.sample_init_param(&mut param_rng, theta);
            beliefs.push(model.initial_belief(theta));
        }
        Ok(Self { model, n1, thetas, beliefs, stream: stream.clone(), step: 0 })
    }

    /// Number of islands.
    pub fn n1(&self) -> usize {
        self.n1
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

    /// Predictor belief of island `i` at the current step.
    pub fn island_belief(&self, i: usize) -> &GaussianBelief {
        &self.beliefs[i]
    }

    /// Weigh and correct every island against the observation at the current
    /// step. Errors with [`Error::Extinction`] when every island potential is
    /// zero.
    pub fn evaluate(&self, obs: &[f64]) -> Result<IkfStepCache> {
        if obs.len() != self.model.obs_dim() {
            return Err(Error::DimensionMismatch {
                context: format!("observation of length {} for obs_dim {}", obs.len(), self.model.obs_dim()),
            });
        }
        let mut island_pots = Vec::with_capacity(self.n1);
        let mut corrected = Vec::with_capacity(self.n1);
        for i in 0..self.n1 {
            let mats = self.model.step_matrices(self.step, self.island_theta(i));
            let (belief, pot) = correct_and_weigh(&self.beliefs[i], &mats, obs)?;
            island_pots.push(pot);
            corrected.push(belief);
        }
        if island_pots.iter().all(|&g| g == 0.0) {
            return Err(Error::Extinction { level: crate::error::Level::Island, step: self.step });
        }
        Ok(IkfStepCache { step: self.step, island_pots, corrected })
    }

    /// Per-step estimates from the cached evaluation: predictor moments use
    /// flat island weights over predictor beliefs, filtered moments weigh the
    /// corrected beliefs by the island potentials.
    pub fn estimates(&self, cache: &IkfStepCache) -> StepEstimates {
        let pd = self.model.param_dim();
        let pots = &cache.island_pots;
        let pot_mean = pots.iter().sum::<f64>() / self.n1 as f64;
        let pot_min = pots.iter().cloned().fold(f64::INFINITY, f64::min);
        let pot_max = pots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (param_filtered_mean, param_filtered_var) = weighted_marginals(&self.thetas, pd, pots);
        let (param_predictor_mean, param_predictor_var) = flat_marginals(&self.thetas, pd);
        let (state_predictor_mean, state_predictor_var) = belief_marginals(&self.beliefs, None);
        let (state_filtered_mean, state_filtered_var) = belief_marginals(&cache.corrected, Some(pots));
        StepEstimates {
            step: cache.step,
            island_ess: ess(pots),
            inner_ess_mean: None,
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

    /// Select islands by potential, adopt the selected ancestors' corrected
    /// beliefs, mutate environments, and predict to the next step.
    pub fn step(&mut self, cache: &IkfStepCache) -> Result<()> {
        if cache.step != self.step {
            return Err(Error::InvalidArgument(format!(
                "step cache for time {} applied at time {}",
                cache.step, self.step
            )));
        }
        let probs = boltzmann_gibbs(&cache.island_pots).map_err(|e| match e {
            Error::WeightsAllZero => Error::Extinction { level: crate::error::Level::Island, step: self.step },
            other => other,
        })?;
        let step_node = self.stream.substream(labels::STEP).substream(self.step as u64);
        let mut sel_stream = step_node.substream(labels::ISLAND_SELECT);
        let selection = multinomial_resample(&probs, self.n1, &mut sel_stream)?;
        let islands_node = step_node.substream(labels::ISLANDS);
        let pd = self.model.param_dim();
        let next = self.step + 1;
        let mut new_thetas = vec![0.0; self.n1 * pd];
        let mut new_beliefs = Vec::with_capacity(self.n1);
        for (i, &ancestor) in selection.indices.iter().enumerate() {
            let node = islands_node.substream(i as u64);
            let mut param_rng = node.substream(labels::PARAM_MUT);
            let prev = &self.thetas[ancestor * pd..(ancestor + 1) * pd];
            let theta = &mut new_thetas[i * pd..(i + 1) * pd];
            self.model.sample_param(next, prev, &mut param_rng, theta);
            let mats = self.model.step_matrices(next, theta);
            new_beliefs.push(kalman_predict(&cache.corrected[ancestor], &mats));
        }
        self.thetas = new_thetas;
        self.beliefs = new_beliefs;
        self.step = next;
        Ok(())
    }
}

/// Marginal mean/variance of a mixture of Gaussian beliefs (law of total
/// variance per coordinate). `weights: None` means flat weights.
fn belief_marginals(beliefs: &[GaussianBelief], weights: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let d = beliefs[0].dim();
    let flat = 1.0 / beliefs.len() as f64;
    let wsum: f64 = weights.map(|w| w.iter().sum()).unwrap_or(1.0);
    let mut mean = vec![0.0; d];
    let mut second = vec![0.0; d];
    for (i, b) in beliefs.iter().enumerate() {
        let w = weights.map(|w| w[i] / wsum).unwrap_or(flat);
        for k in 0..d {
            let m = b.mean()[k];
            mean[k] += w * m;
            second[k] += w * (b.cov()[(k, k)] + m * m);
        }
    }
    for k in 0..d {
        second[k] = (second[k] - mean[k] * mean[k]).max(0.0);
    }
    (mean, second)
}
