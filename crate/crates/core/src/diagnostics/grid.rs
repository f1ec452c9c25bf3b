//! Exact filter on a dense rectangular grid, used as an accuracy oracle.
//!
//! The grid filter discretizes the joint law of a scalar environment and a
//! scalar state on cell centers and runs the exact reweight/propagate
//! recursion. It applies to models with the structure captured by
//! [`GridModel`]: the environment kernel ignores the previous environment
//! value, the state mean is a drift of the previous state shifted additively
//! by the new environment, and the observation likelihood depends on the
//! state only. That structure lets the propagation integrate the environment
//! out of the filtered law first (its marginal in the previous environment is
//! irrelevant for the next step), so one step costs
//! `O(n_theta * n_x * window)` instead of `O((n_theta * n_x)^2)`.
//!
//! Probability is conserved exactly up to float rounding: every discretized
//! Gaussian kernel row is normalized to sum to one, so the unnormalized
//! predictor mass stays at one through every propagation. The running total is
//! reported at each step so drift is observable rather than hidden by
//! renormalization.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{GrowthModel, Trajectory};

/// Width of the truncation window for discretized Gaussian kernels, in
/// standard deviations on each side. Mass beyond nine sigma is below 1e-18
/// and is reassigned by row normalization.
const WINDOW_SIGMAS: f64 = 9.0;

/// Structure the grid filter exploits: scalar environment resampled from a
/// time-dependent Gaussian that ignores its previous value, scalar state with
/// Gaussian noise around `drift(x_prev) + theta`, and a likelihood in the
/// state only.
pub trait GridModel: Sync {
    /// Mean and standard deviation of the initial environment law.
    fn init_theta(&self) -> (f64, f64);
    /// Mean and standard deviation of the initial state law.
    fn init_state(&self) -> (f64, f64);
    /// Mean of the environment kernel at time `n` (independent of the past).
    fn theta_mean(&self, n: usize) -> f64;
    /// Standard deviation of the environment kernel.
    fn theta_sd(&self) -> f64;
    /// Deterministic part of the state map, before the environment shift.
    fn drift(&self, x: f64) -> f64;
    /// Standard deviation of the state noise.
    fn state_sd(&self) -> f64;
    /// Observation likelihood, as a function of the state and the observation.
    fn potential(&self, x: f64, y: f64) -> f64;
}

impl GridModel for GrowthModel {
    fn init_theta(&self) -> (f64, f64) {
        (0.0, self.sigma_theta())
    }

    fn init_state(&self) -> (f64, f64) {
        (0.0, self.sigma_x())
    }

    fn theta_mean(&self, n: usize) -> f64 {
        GrowthModel::theta_mean(self, n)
    }

    fn theta_sd(&self) -> f64 {
        self.sigma_theta()
    }

    fn drift(&self, x: f64) -> f64 {
        GrowthModel::drift(self, x)
    }

    fn state_sd(&self) -> f64 {
        self.sigma_x()
    }

    fn potential(&self, x: f64, y: f64) -> f64 {
        let r = y - x;
        (-(r * r) / (2.0 * self.params().sigma_y2)).exp()
    }
}

/// Grid geometry and the boundary-mass guard.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Lower edge of the environment axis.
    pub theta_min: f64,
    /// Upper edge of the environment axis.
    pub theta_max: f64,
    /// Number of environment cells.
    pub n_theta: usize,
    /// Lower edge of the state axis.
    pub x_min: f64,
    /// Upper edge of the state axis.
    pub x_max: f64,
    /// Number of state cells.
    pub n_x: usize,
    /// Hard error threshold on filtered mass in the outermost cells.
    pub boundary_limit: f64,
}

impl Default for GridSpec {
    /// 400x400 cells sized for the growth benchmark: the environment swings
    /// within +-8 plus Gaussian noise, the state within roughly +-25.
    fn default() -> Self {
        Self {
            theta_min: -14.5,
            theta_max: 14.5,
            n_theta: 400,
            x_min: -48.0,
            x_max: 48.0,
            n_x: 400,
            boundary_limit: 1e-4,
        }
    }
}

/// One uniformly spaced axis; mass lives on cell centers.
#[derive(Clone, Copy, Debug)]
struct Axis {
    min: f64,
    width: f64,
    n: usize,
}

impl Axis {
    fn new(min: f64, max: f64, n: usize, name: &str) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(Error::InvalidArgument(format!("{name} axis must have finite bounds with max > min, got [{min}, {max}]")));
        }
        if n < 4 {
            return Err(Error::InvalidArgument(format!("{name} axis needs at least 4 cells, got {n}")));
        }
        Ok(Self { min, width: (max - min) / n as f64, n })
    }

    fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.width
    }

    fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.center(i)).collect()
    }

    /// Index of the cell containing `x`, clamped to the grid.
    fn nearest(&self, x: f64) -> usize {
        let raw = ((x - self.min) / self.width).floor();
        if raw.is_nan() {
            return 0;
        }
        raw.max(0.0).min(self.n as f64 - 1.0) as usize
    }
}

/// Discretize `N(mean, sd^2)` on the axis: cell-center weights inside a
/// nine-sigma window, normalized to sum to one. A zero standard deviation (or
/// a mean so far off-grid that every weight underflows) collapses to a point
/// mass in the nearest cell, which the boundary guard then reports.
fn gaussian_row(axis: &Axis, mean: f64, sd: f64) -> (usize, Vec<f64>) {
    if sd == 0.0 {
        return (axis.nearest(mean), vec![1.0]);
    }
    let lo = axis.nearest(mean - WINDOW_SIGMAS * sd);
    let hi = axis.nearest(mean + WINDOW_SIGMAS * sd);
    let mut weights = Vec::with_capacity(hi - lo + 1);
    let mut total = 0.0;
    for i in lo..=hi {
        let z = (axis.center(i) - mean) / sd;
        let w = (-0.5 * z * z).exp();
        total += w;
        weights.push(w);
    }
    if total == 0.0 {
        return (axis.nearest(mean), vec![1.0]);
    }
    for w in &mut weights {
        *w /= total;
    }
    (lo, weights)
}

/// Per-step output of [`GridFilter::evaluate`]: the filtered joint law and
/// the step's bookkeeping, consumed by [`GridFilter::step`] and
/// [`GridFilter::summary`].
#[derive(Clone, Debug)]
pub struct GridStepCache {
    step: usize,
    filtered: Vec<f64>,
    log_norm_increment: f64,
    predictor_total_mass: f64,
    boundary_mass: f64,
}

impl GridStepCache {
    /// Step index this cache belongs to.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Filtered joint mass, row-major over (environment, state) cells.
    pub fn filtered_joint(&self) -> &[f64] {
        &self.filtered
    }

    /// Log of the predictor-mean likelihood at this step.
    pub fn log_norm_increment(&self) -> f64 {
        self.log_norm_increment
    }

    /// Total predictor mass before reweighting (one up to float drift).
    pub fn predictor_total_mass(&self) -> f64 {
        self.predictor_total_mass
    }

    /// Filtered mass in the outermost cells of either axis.
    pub fn boundary_mass(&self) -> f64 {
        self.boundary_mass
    }
}

/// A one-dimensional marginal on cell centers.
#[derive(Clone, Debug)]
pub struct GridMarginal {
    centers: Vec<f64>,
    mass: Vec<f64>,
}

impl GridMarginal {
    /// Build a marginal; mass must be nonnegative with a positive total.
    pub fn new(centers: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() != mass.len() {
            return Err(Error::DimensionMismatch {
                context: format!("marginal with {} centers and {} mass values", centers.len(), mass.len()),
            });
        }
        let mut total = 0.0;
        for (&c, &m) in centers.iter().zip(&mass) {
            if !c.is_finite() || !m.is_finite() || m < 0.0 {
                return Err(Error::NonFinite { context: format!("marginal entry ({c}, {m})") });
            }
            total += m;
        }
        if total <= 0.0 {
            return Err(Error::WeightsAllZero);
        }
        Ok(Self { centers, mass })
    }

    /// Cell centers.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Unnormalized mass per cell.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Total mass.
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Mean of a function under the normalized marginal.
    pub fn mean_of<F>(&self, f: F) -> f64
    where
        F: Fn(f64) -> f64,
    {
        let mut num = 0.0;
        let mut den = 0.0;
        for (&c, &m) in self.centers.iter().zip(&self.mass) {
            num += m * f(c);
            den += m;
        }
        num / den
    }

    /// Mean of the marginal.
    pub fn mean(&self) -> f64 {
        self.mean_of(|x| x)
    }

    /// Variance of the marginal (clamped at zero against rounding).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let m2 = self.mean_of(|x| x * x);
        (m2 - m * m).max(0.0)
    }

    /// Cell bounds around each center, splitting the gap between neighbours
    /// evenly and mirroring the first and last gaps outward. A single-cell
    /// marginal degenerates to a zero-width cell at its center.
    fn cell_bounds(&self, i: usize) -> (f64, f64) {
        let c = &self.centers;
        let n = c.len();
        if n == 1 {
            return (c[0], c[0]);
        }
        let low = if i == 0 { c[0] - (c[1] - c[0]) / 2.0 } else { (c[i - 1] + c[i]) / 2.0 };
        let high = if i == n - 1 { c[n - 1] + (c[n - 1] - c[n - 2]) / 2.0 } else { (c[i] + c[i + 1]) / 2.0 };
        (low, high)
    }

    /// Cumulative mass fraction at `t`, spreading each cell's mass uniformly
    /// over the cell. This is the piecewise-linear CDF of the binned law; it
    /// is the right integral to compare against indicator means taken over
    /// continuum samples, because it avoids the half-cell quantization error
    /// of summing whole cells.
    pub fn cdf(&self, t: f64) -> f64 {
        let mut cum = 0.0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let (low, high) = self.cell_bounds(i);
            let frac = if high > low { ((t - low) / (high - low)).clamp(0.0, 1.0) } else if t >= low { 1.0 } else { 0.0 };
            cum += m * frac;
        }
        cum / self.total()
    }

    /// Quantile of the binned law: the point where the piecewise-linear CDF
    /// reaches `p`, interpolating inside the crossing cell. Levels 0 and 1
    /// return the outer edge of the first and last cells carrying mass.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("quantile level must lie in [0, 1], got {p}")));
        }
        let target = p * self.total();
        let mut cum = 0.0;
        let mut last_positive = None;
        for (i, &m) in self.mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let (low, high) = self.cell_bounds(i);
            if cum + m >= target {
                return Ok(low + (high - low) * ((target - cum) / m).clamp(0.0, 1.0));
            }
            cum += m;
            last_positive = Some(high);
        }
        Ok(last_positive.expect("marginal carries positive mass"))
    }

    /// The nine deciles (10% through 90%).
    pub fn deciles(&self) -> Result<Vec<f64>> {
        (1..10).map(|k| self.quantile(k as f64 / 10.0)).collect()
    }
}

/// Marginals and bookkeeping for one step of the grid filter.
#[derive(Clone, Debug)]
pub struct GridStepSummary {
    /// Step index.
    pub step: usize,
    /// Log of the predictor-mean likelihood at this step.
    pub log_norm_increment: f64,
    /// Total predictor mass before reweighting (one up to float drift).
    pub predictor_total_mass: f64,
    /// Filtered mass in the outermost cells of either axis.
    pub boundary_mass: f64,
    /// Filtered environment marginal.
    pub filtered_theta: GridMarginal,
    /// Filtered state marginal.
    pub filtered_x: GridMarginal,
    /// Predictor environment marginal.
    pub predictor_theta: GridMarginal,
    /// Predictor state marginal.
    pub predictor_x: GridMarginal,
}

/// The dense-grid filter. The same evaluate/step cadence as the particle
/// systems: `evaluate` reweights the current predictor by the observation,
/// `step` propagates the filtered law one step forward.
#[derive(Clone, Debug)]
pub struct GridFilter<M: GridModel> {
    model: M,
    spec: GridSpec,
    theta: Axis,
    x: Axis,
    /// Predictor joint mass at the current step, row-major over
    /// (environment, state) cells.
    predictor: Vec<f64>,
    /// Drift evaluated at each state cell center.
    drift_at: Vec<f64>,
    step: usize,
}

impl<M: GridModel> GridFilter<M> {
    /// Discretize the initial product law on the grid.
    pub fn new(model: M, spec: GridSpec) -> Result<Self> {
        if !spec.boundary_limit.is_finite() || spec.boundary_limit <= 0.0 || spec.boundary_limit >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "boundary_limit must lie strictly between 0 and 1, got {}",
                spec.boundary_limit
            )));
        }
        let theta = Axis::new(spec.theta_min, spec.theta_max, spec.n_theta, "environment")?;
        let x = Axis::new(spec.x_min, spec.x_max, spec.n_x, "state")?;
        let (tm, tsd) = model.init_theta();
        let (xm, xsd) = model.init_state();
        for (name, v) in [("environment", tsd), ("state", xsd)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("initial {name} sd must be finite and nonnegative, got {v}")));
            }
        }
        let (tlo, tw) = gaussian_row(&theta, tm, tsd);
        let (xlo, xw) = gaussian_row(&x, xm, xsd);
        let mut predictor = vec![0.0; theta.n * x.n];
        for (dt, &wt) in tw.iter().enumerate() {
            let row = &mut predictor[(tlo + dt) * x.n..(tlo + dt + 1) * x.n];
            for (dx, &wx) in xw.iter().enumerate() {
                row[xlo + dx] = wt * wx;
            }
        }
        let drift_at = x.centers().iter().map(|&c| model.drift(c)).collect::<Vec<_>>();
        for &d in &drift_at {
            if !d.is_finite() {
                return Err(Error::NonFinite { context: "state drift on the grid".into() });
            }
        }
        Ok(Self { model, spec, theta, x, predictor, drift_at, step: 0 })
    }

    /// Environment cell centers.
    pub fn theta_centers(&self) -> Vec<f64> {
        self.theta.centers()
    }

    /// State cell centers.
    pub fn x_centers(&self) -> Vec<f64> {
        self.x.centers()
    }

    /// Current step index.
    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Predictor joint mass, row-major over (environment, state) cells.
    pub fn predictor_joint(&self) -> &[f64] {
        &self.predictor
    }

    /// The model.
    pub fn model(&self) -> &M {
        &self.model
    }

    /// Reweight the predictor by the likelihood of `obs`, normalize, and
    /// check the boundary guard. Fails with a grid-too-small error when the
    /// filtered law puts more than `boundary_limit` mass in the outermost
    /// cells, and with an all-zero-weights error when the observation kills
    /// every cell.
    pub fn evaluate(&self, obs: &[f64]) -> Result<GridStepCache> {
        if obs.len() != 1 {
            return Err(Error::DimensionMismatch { context: format!("{}-dimensional observation for a scalar grid filter", obs.len()) });
        }
        let y = obs[0];
        if !y.is_finite() {
            return Err(Error::NonFinite { context: format!("observation at step {}", self.step) });
        }
        let mut g = Vec::with_capacity(self.x.n);
        for ix in 0..self.x.n {
            let v = self.model.potential(self.x.center(ix), y);
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NonFinitePotential { step: self.step, index: ix, value: v });
            }
            g.push(v);
        }
        let mut filtered = vec![0.0; self.predictor.len()];
        let mut predictor_total = 0.0;
        let mut total = 0.0;
        for it in 0..self.theta.n {
            let row = &self.predictor[it * self.x.n..(it + 1) * self.x.n];
            let out = &mut filtered[it * self.x.n..(it + 1) * self.x.n];
            for ix in 0..self.x.n {
                predictor_total += row[ix];
                let w = row[ix] * g[ix];
                out[ix] = w;
                total += w;
            }
        }
        if total <= 0.0 {
            return Err(Error::WeightsAllZero);
        }
        for w in &mut filtered {
            *w /= total;
        }
        let mut boundary = 0.0;
        for it in 0..self.theta.n {
            let row = &filtered[it * self.x.n..(it + 1) * self.x.n];
            if it == 0 || it == self.theta.n - 1 {
                boundary += row.iter().sum::<f64>();
            } else {
                boundary += row[0] + row[self.x.n - 1];
            }
        }
        if boundary > self.spec.boundary_limit {
            return Err(Error::GridTooSmall { mass: boundary, limit: self.spec.boundary_limit, step: self.step });
        }
        Ok(GridStepCache {
            step: self.step,
            filtered,
            log_norm_increment: (total / predictor_total).ln(),
            predictor_total_mass: predictor_total,
            boundary_mass: boundary,
        })
    }

    /// Propagate the filtered law one step: integrate the environment out,
    /// then build each destination environment row from the row-normalized
    /// state kernel and weigh it by the discretized environment kernel for
    /// the next time.
    pub fn step(&mut self, cache: &GridStepCache) -> Result<()> {
        if cache.step != self.step {
            return Err(Error::InvalidArgument(format!("step cache for time {} used at time {}", cache.step, self.step)));
        }
        let nx = self.x.n;
        let mut q = vec![0.0; nx];
        for it in 0..self.theta.n {
            let row = &cache.filtered[it * nx..(it + 1) * nx];
            for (acc, &m) in q.iter_mut().zip(row) {
                *acc += m;
            }
        }
        let (tlo, tw) = gaussian_row(&self.theta, self.model.theta_mean(self.step + 1), self.model.theta_sd());
        let state_sd = self.model.state_sd();
        let mut next = vec![0.0; self.predictor.len()];
        next.par_chunks_mut(nx).enumerate().for_each(|(it, row)| {
            if it < tlo || it >= tlo + tw.len() {
                return;
            }
            let theta_c = self.theta.center(it);
            for (src, &mass) in q.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let (xlo, kernel) = gaussian_row(&self.x, self.drift_at[src] + theta_c, state_sd);
                for (dx, &k) in kernel.iter().enumerate() {
                    row[xlo + dx] += mass * k;
                }
            }
            let wt = tw[it - tlo];
            for v in row.iter_mut() {
                *v *= wt;
            }
        });
        self.predictor = next;
        self.step += 1;
        Ok(())
    }

    /// Marginals and bookkeeping for the step the cache belongs to. Call
    /// between `evaluate` and `step`.
    pub fn summary(&self, cache: &GridStepCache) -> Result<GridStepSummary> {
        if cache.step != self.step {
            return Err(Error::InvalidArgument(format!("step cache for time {} used at time {}", cache.step, self.step)));
        }
        let (ft, fx) = self.marginals(&cache.filtered)?;
        let (pt, px) = self.marginals(&self.predictor)?;
        Ok(GridStepSummary {
            step: cache.step,
            log_norm_increment: cache.log_norm_increment,
            predictor_total_mass: cache.predictor_total_mass,
            boundary_mass: cache.boundary_mass,
            filtered_theta: ft,
            filtered_x: fx,
            predictor_theta: pt,
            predictor_x: px,
        })
    }

    fn marginals(&self, joint: &[f64]) -> Result<(GridMarginal, GridMarginal)> {
        let nx = self.x.n;
        let mut tm = vec![0.0; self.theta.n];
        let mut xm = vec![0.0; nx];
        for it in 0..self.theta.n {
            let row = &joint[it * nx..(it + 1) * nx];
            let mut s = 0.0;
            for (acc, &m) in xm.iter_mut().zip(row) {
                s += m;
                *acc += m;
            }
            tm[it] = s;
        }
        Ok((GridMarginal::new(self.theta.centers(), tm)?, GridMarginal::new(self.x.centers(), xm)?))
    }

    /// Run the filter over the first `steps` observations of a trajectory and
    /// collect one summary per step.
    pub fn run(model: M, spec: GridSpec, trajectory: &Trajectory, steps: usize) -> Result<Vec<GridStepSummary>> {
        if steps == 0 || steps > trajectory.horizon() + 1 {
            return Err(Error::InvalidArgument(format!(
                "cannot run {steps} steps on a trajectory with {} observations",
                trajectory.horizon() + 1
            )));
        }
        let mut filter = Self::new(model, spec)?;
        let mut out = Vec::with_capacity(steps);
        for n in 0..steps {
            let cache = filter.evaluate(trajectory.obs(n))?;
            out.push(filter.summary(&cache)?);
            if n + 1 < steps {
                filter.step(&cache)?;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate, GrowthParams};
    use crate::rng::RandomStream;

    /// Deterministic translation fixture: point masses move by `shift` per
    /// step and the likelihood is flat.
    struct Translate {
        start: f64,
        shift: f64,
    }

    impl GridModel for Translate {
        fn init_theta(&self) -> (f64, f64) {
            (0.0, 0.0)
        }
        fn init_state(&self) -> (f64, f64) {
            (self.start, 0.0)
        }
        fn theta_mean(&self, _n: usize) -> f64 {
            0.0
        }
        fn theta_sd(&self) -> f64 {
            0.0
        }
        fn drift(&self, x: f64) -> f64 {
            x + self.shift
        }
        fn state_sd(&self) -> f64 {
            0.0
        }
        fn potential(&self, _x: f64, _y: f64) -> f64 {
            1.0
        }
    }

    /// Gaussian prior with a Gaussian likelihood and identity dynamics.
    struct Conjugate {
        prior_sd: f64,
        obs_var: f64,
    }

    impl GridModel for Conjugate {
        fn init_theta(&self) -> (f64, f64) {
            (0.0, 1.0)
        }
        fn init_state(&self) -> (f64, f64) {
            (0.0, self.prior_sd)
        }
        fn theta_mean(&self, _n: usize) -> f64 {
            0.0
        }
        fn theta_sd(&self) -> f64 {
            1.0
        }
        fn drift(&self, x: f64) -> f64 {
            x
        }
        fn state_sd(&self) -> f64 {
            1.0
        }
        fn potential(&self, x: f64, y: f64) -> f64 {
            let r = y - x;
            (-(r * r) / (2.0 * self.obs_var)).exp()
        }
    }

    fn growth() -> GrowthModel {
        GrowthModel::new(GrowthParams::default()).expect("default growth parameters are valid")
    }

    #[test]
    fn point_mass_is_transported_by_the_deterministic_map() {
        // Centers at -2 + (i + 0.5) * 0.5; the point starts on a center and
        // moves exactly one cell per step.
        let spec = GridSpec {
            theta_min: -1.0,
            theta_max: 1.0,
            n_theta: 5,
            x_min: -2.0,
            x_max: 2.0,
            n_x: 8,
            boundary_limit: 1e-4,
        };
        let mut filter = GridFilter::new(Translate { start: 0.25, shift: 0.5 }, spec).unwrap();
        for expected in [0.25, 0.75, 1.25] {
            let cache = filter.evaluate(&[0.0]).unwrap();
            let nonzero: Vec<(usize, f64)> =
                cache.filtered_joint().iter().copied().enumerate().filter(|&(_, m)| m != 0.0).collect();
            assert_eq!(nonzero.len(), 1, "mass should stay a point");
            assert_eq!(nonzero[0].1, 1.0);
            let summary = filter.summary(&cache).unwrap();
            assert_eq!(summary.filtered_x.mean(), expected);
            assert_eq!(summary.filtered_x.variance(), 0.0);
            assert_eq!(summary.filtered_theta.mean(), 0.0);
            assert!((summary.predictor_total_mass - 1.0).abs() < 1e-12);
            filter.step(&cache).unwrap();
        }
        // The next move lands on the last cell; the boundary guard fires.
        match filter.evaluate(&[0.0]) {
            Err(Error::GridTooSmall { mass, limit, step }) => {
                assert!((mass - 1.0).abs() < 1e-12);
                assert_eq!(limit, 1e-4);
                assert_eq!(step, 3);
            }
            other => panic!("expected a grid-too-small error, got {other:?}"),
        }
    }

    #[test]
    fn flat_likelihood_prediction_matches_monte_carlo() {
        // With a flat likelihood the first step is pure prediction, so the
        // predictor marginals at step 1 must agree with a large Monte Carlo
        // sample of the model's one-step law.
        struct FlatGrowth(GrowthModel);
        impl GridModel for FlatGrowth {
            fn init_theta(&self) -> (f64, f64) {
                self.0.init_theta()
            }
            fn init_state(&self) -> (f64, f64) {
                self.0.init_state()
            }
            fn theta_mean(&self, n: usize) -> f64 {
                GridModel::theta_mean(&self.0, n)
            }
            fn theta_sd(&self) -> f64 {
                GridModel::theta_sd(&self.0)
            }
            fn drift(&self, x: f64) -> f64 {
                GridModel::drift(&self.0, x)
            }
            fn state_sd(&self) -> f64 {
                self.0.state_sd()
            }
            fn potential(&self, _x: f64, _y: f64) -> f64 {
                1.0
            }
        }

        let model = growth();
        let mut filter = GridFilter::new(FlatGrowth(model.clone()), GridSpec::default()).unwrap();
        let cache = filter.evaluate(&[0.0]).unwrap();
        filter.step(&cache).unwrap();
        let cache = filter.evaluate(&[0.0]).unwrap();
        let summary = filter.summary(&cache).unwrap();

        let draws = 1_000_000usize;
        let mut rng = RandomStream::new(416, 0);
        let (mut st, mut sx, mut sx2) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let x0 = rng.normal(0.0, model.sigma_x());
            let t1 = rng.normal(model.theta_mean(1), model.sigma_theta());
            let x1 = rng.normal(model.drift(x0) + t1, model.sigma_x());
            st += t1;
            sx += x1;
            sx2 += x1 * x1;
        }
        let mc_theta = st / draws as f64;
        let mc_x = sx / draws as f64;
        let sd_x = (sx2 / draws as f64 - mc_x * mc_x).sqrt();

        let theta_band = 4.0 * model.sigma_theta() / (draws as f64).sqrt() + 1e-3;
        let x_band = 4.0 * sd_x / (draws as f64).sqrt() + 1e-2;
        assert!(
            (summary.predictor_theta.mean() - mc_theta).abs() < theta_band,
            "environment predictor mean {} vs Monte Carlo {mc_theta}",
            summary.predictor_theta.mean()
        );
        assert!(
            (summary.predictor_x.mean() - mc_x).abs() < x_band,
            "state predictor mean {} vs Monte Carlo {mc_x}",
            summary.predictor_x.mean()
        );
    }

    #[test]
    fn first_correction_matches_the_conjugate_gaussian_posterior() {
        // Prior N(0, 1), likelihood N(x, 10): posterior variance 10/11 and
        // posterior mean y/11, up to cell-center discretization error.
        let spec = GridSpec {
            theta_min: -6.0,
            theta_max: 6.0,
            n_theta: 100,
            x_min: -8.0,
            x_max: 8.0,
            n_x: 400,
            boundary_limit: 1e-4,
        };
        let filter = GridFilter::new(Conjugate { prior_sd: 1.0, obs_var: 10.0 }, spec).unwrap();
        let y = 1.3;
        let cache = filter.evaluate(&[y]).unwrap();
        let summary = filter.summary(&cache).unwrap();
        assert!((summary.filtered_x.variance() - 10.0 / 11.0).abs() < 1e-3);
        assert!((summary.filtered_x.mean() - y / 11.0).abs() < 1e-3);
    }

    #[test]
    fn growth_run_conserves_mass_and_stays_off_the_boundary() {
        let model = growth();
        let stream = RandomStream::new(33, 0);
        let traj = simulate(&model, 25, &stream);
        let spec = GridSpec { n_theta: 200, n_x: 200, ..GridSpec::default() };
        let summaries = GridFilter::run(model, spec, &traj, 26).unwrap();
        assert_eq!(summaries.len(), 26);
        for s in &summaries {
            assert!(
                (s.predictor_total_mass - 1.0).abs() < 1e-9,
                "mass drifted to {} at step {}",
                s.predictor_total_mass,
                s.step
            );
            assert!(s.boundary_mass < 1e-6, "boundary mass {} at step {}", s.boundary_mass, s.step);
            assert!(s.log_norm_increment.is_finite());
        }
    }

    #[test]
    fn undersized_grid_is_reported() {
        let spec = GridSpec {
            theta_min: -0.5,
            theta_max: 0.5,
            n_theta: 10,
            x_min: -0.5,
            x_max: 0.5,
            n_x: 10,
            boundary_limit: 1e-4,
        };
        let filter = GridFilter::new(growth(), spec).unwrap();
        match filter.evaluate(&[0.0]) {
            Err(Error::GridTooSmall { mass, .. }) => assert!(mass > 0.1),
            other => panic!("expected a grid-too-small error, got {other:?}"),
        }
    }

    #[test]
    fn marginal_statistics_match_hand_values() {
        let m = GridMarginal::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!((m.mean() - 2.0).abs() < 1e-15);
        assert!((m.mean_of(|x| x * x) - 5.0).abs() < 1e-15);
        assert!((m.variance() - 1.0).abs() < 1e-15);
        // Cells span [-0.5, 0.5], [0.5, 1.5], [1.5, 2.5], [2.5, 3.5] with the
        // mass spread uniformly, so the CDF is piecewise linear: level 0.1 is
        // reached exactly at the first cell's upper edge, level 0.5 sits 0.2
        // of the way into the 0.3-mass cell, level 0.95 sits 0.35 of the way
        // into the 0.4-mass cell.
        assert!((m.quantile(0.1).unwrap() - 0.5).abs() < 1e-12);
        assert!((m.quantile(0.5).unwrap() - (1.5 + 0.2 / 0.3)).abs() < 1e-12);
        assert!((m.quantile(0.95).unwrap() - 3.375).abs() < 1e-12);
        assert_eq!(m.quantile(0.0).unwrap(), -0.5);
        assert_eq!(m.quantile(1.0).unwrap(), 3.5);
        assert_eq!(m.deciles().unwrap().len(), 9);
        assert!((m.cdf(0.5) - 0.1).abs() < 1e-12);
        assert!((m.cdf(2.0) - 0.45).abs() < 1e-12);
        assert!(m.cdf(-1.0) == 0.0 && m.cdf(4.0) == 1.0);
        // cdf and quantile are inverse on the support.
        for p in [0.05, 0.3, 0.6, 0.9] {
            assert!((m.cdf(m.quantile(p).unwrap()) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_requires_the_current_step() {
        let model = growth();
        let mut filter = GridFilter::new(model, GridSpec { n_theta: 50, n_x: 50, ..GridSpec::default() }).unwrap();
        let cache = filter.evaluate(&[0.3]).unwrap();
        filter.step(&cache).unwrap();
        assert!(filter.summary(&cache).is_err());
        assert!(matches!(filter.step(&cache), Err(Error::InvalidArgument(_))));
    }
}
