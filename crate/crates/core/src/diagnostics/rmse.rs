//! Paired accuracy comparison of the island filter and the interacting
//! Kalman filter on the mobile model.
//!
//! Both filters run on the same simulated trajectories and are scored by the
//! root mean square error of three filtered statistics against the simulated
//! truth: the speed (third state component), the force strength `|theta|`,
//! and the force orientation `atan2(theta_2, theta_1)`. Orientation errors
//! are wrapped to `(-pi, pi]` before squaring. Per-replication RMSE
//! differences feed a percentile bootstrap, giving a confidence interval for
//! the mean paired difference of each signal; a positive difference means
//! the island filter has the smaller error.

use crate::diagnostics::stats::bootstrap_mean_ci;
use crate::error::{Error, Result};
use crate::kalman::IkfSystem;
use crate::lipf::IslandSystem;
use crate::models::{force_orientation, force_strength, simulate, MobileModel};
use crate::rng::{labels, RandomStream};

/// Study design for the paired comparison.
#[derive(Clone, Copy, Debug)]
pub struct RmseConfig {
    /// Island count of the island filter.
    pub islands: usize,
    /// Particles per island of the island filter.
    pub particles: usize,
    /// Island count of the interacting Kalman filter.
    pub ikf_islands: usize,
    /// Number of filtering steps per replication.
    pub horizon: usize,
    /// Number of paired replications, each on a fresh trajectory.
    pub replications: usize,
    /// Bootstrap resamples for the confidence intervals.
    pub bootstrap_draws: usize,
}

impl Default for RmseConfig {
    fn default() -> Self {
        Self { islands: 100, particles: 300, ikf_islands: 100, horizon: 40, replications: 20, bootstrap_draws: 10_000 }
    }
}

/// Paired RMSE results for one filtered statistic.
#[derive(Clone, Debug)]
pub struct SignalRmse {
    /// Statistic name: `speed`, `force_strength`, or `force_orientation`.
    pub signal: String,
    /// Pooled RMSE of the island filter across replications.
    pub island_filter_rmse: f64,
    /// Pooled RMSE of the interacting Kalman filter across replications.
    pub gaussian_filter_rmse: f64,
    /// Mean over replications of (Kalman RMSE - island RMSE); positive
    /// favors the island filter.
    pub mean_difference: f64,
    /// Lower end of the 95% bootstrap interval for the mean difference.
    pub ci_low: f64,
    /// Upper end of the 95% bootstrap interval for the mean difference.
    pub ci_high: f64,
}

/// Result of the paired comparison.
#[derive(Clone, Debug)]
pub struct RmseComparison {
    /// Number of paired replications.
    pub replications: usize,
    /// Filtering steps per replication.
    pub horizon: usize,
    /// One entry per filtered statistic.
    pub signals: Vec<SignalRmse>,
}

const SIGNALS: [&str; 3] = ["speed", "force_strength", "force_orientation"];

/// Wrap an angle difference into `(-pi, pi]`.
fn wrap_angle(d: f64) -> f64 {
    let mut r = d % std::f64::consts::TAU;
    if r > std::f64::consts::PI {
        r -= std::f64::consts::TAU;
    } else if r <= -std::f64::consts::PI {
        r += std::f64::consts::TAU;
    }
    r
}

/// Potential-weighted mean of a per-island value.
fn weighted_island_mean<F>(potentials: &[f64], value: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &w) in potentials.iter().enumerate() {
        num += w * value(i);
        den += w;
    }
    num / den
}

/// Filtered estimates of the three signals: speed, force strength, and force
/// orientation. Strength is the weighted mean of the per-island strength;
/// orientation is the direction of the weighted mean force vector.
struct SignalEstimates {
    speed: f64,
    strength: f64,
    orientation: f64,
}

fn signal_errors(est: &SignalEstimates, truth_state: &[f64], truth_theta: &[f64]) -> [f64; 3] {
    [
        est.speed - truth_state[2],
        est.strength - force_strength(truth_theta),
        wrap_angle(est.orientation - force_orientation(truth_theta)),
    ]
}

/// Run the paired comparison. Replication `r` draws its trajectory and both
/// filters from `root.substream(REPLICATION).substream(r)` — the trajectory
/// from its SIMULATION child and the two filters from children 0 and 1 of
/// its ALGORITHM child — and the bootstrap uses the BOOTSTRAP_CI child of
/// `root`, one substream per signal.
pub fn rmse_comparison(model: &MobileModel, config: &RmseConfig, root: &RandomStream) -> Result<RmseComparison> {
    if config.replications < 2 {
        return Err(Error::InvalidArgument(format!("paired comparison needs at least 2 replications, got {}", config.replications)));
    }
    if config.horizon == 0 {
        return Err(Error::InvalidArgument("paired comparison needs a positive horizon".into()));
    }
    let reps = root.substream(labels::REPLICATION);
    let mut island_sq = vec![Vec::with_capacity(config.replications); SIGNALS.len()];
    let mut gauss_sq = vec![Vec::with_capacity(config.replications); SIGNALS.len()];
    for r in 0..config.replications {
        let rep = reps.substream(r as u64);
        let traj = simulate(model, config.horizon, &rep);
        let algo = rep.substream(labels::ALGORITHM);

        let mut lipf = IslandSystem::init(model.clone(), config.islands, config.particles, &algo.substream(0))?;
        let mut lipf_acc = [0.0; 3];
        for n in 0..config.horizon {
            let cache = lipf.evaluate(traj.obs(n))?;
            let pots = cache.island_potentials();
            let est = SignalEstimates {
                speed: lipf.filtered_state_mean_of(&cache, |s| s[2])?,
                strength: weighted_island_mean(pots, |i| force_strength(lipf.island_theta(i))),
                orientation: {
                    let t1 = weighted_island_mean(pots, |i| lipf.island_theta(i)[0]);
                    let t2 = weighted_island_mean(pots, |i| lipf.island_theta(i)[1]);
                    force_orientation(&[t1, t2])
                },
            };
            for (acc, e) in lipf_acc.iter_mut().zip(signal_errors(&est, traj.state(n), traj.theta(n))) {
                *acc += e * e;
            }
            if n + 1 < config.horizon {
                lipf.step(&cache)?;
            }
        }

        let mut ikf = IkfSystem::init(model.clone(), config.ikf_islands, &algo.substream(1))?;
        let mut ikf_acc = [0.0; 3];
        for n in 0..config.horizon {
            let cache = ikf.evaluate(traj.obs(n))?;
            let pots = cache.island_potentials();
            let beliefs = cache.corrected_beliefs();
            let est = SignalEstimates {
                speed: weighted_island_mean(pots, |i| beliefs[i].mean()[2]),
                strength: weighted_island_mean(pots, |i| force_strength(ikf.island_theta(i))),
                orientation: {
                    let t1 = weighted_island_mean(pots, |i| ikf.island_theta(i)[0]);
                    let t2 = weighted_island_mean(pots, |i| ikf.island_theta(i)[1]);
                    force_orientation(&[t1, t2])
                },
            };
            for (acc, e) in ikf_acc.iter_mut().zip(signal_errors(&est, traj.state(n), traj.theta(n))) {
                *acc += e * e;
            }
            if n + 1 < config.horizon {
                ikf.step(&cache)?;
            }
        }

        for s in 0..SIGNALS.len() {
            island_sq[s].push(lipf_acc[s] / config.horizon as f64);
            gauss_sq[s].push(ikf_acc[s] / config.horizon as f64);
        }
    }

    let ci_root = root.substream(labels::BOOTSTRAP_CI);
    let mut signals = Vec::with_capacity(SIGNALS.len());
    for (s, name) in SIGNALS.iter().enumerate() {
        let island_rmse = (island_sq[s].iter().sum::<f64>() / config.replications as f64).sqrt();
        let gauss_rmse = (gauss_sq[s].iter().sum::<f64>() / config.replications as f64).sqrt();
        let diffs: Vec<f64> =
            island_sq[s].iter().zip(&gauss_sq[s]).map(|(&l, &g)| g.sqrt() - l.sqrt()).collect();
        let mean_difference = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let (ci_low, ci_high) =
            bootstrap_mean_ci(&diffs, config.bootstrap_draws, 0.95, &mut ci_root.substream(s as u64))?;
        signals.push(SignalRmse {
            signal: (*name).to_string(),
            island_filter_rmse: island_rmse,
            gaussian_filter_rmse: gauss_rmse,
            mean_difference,
            ci_low,
            ci_high,
        });
    }
    Ok(RmseComparison { replications: config.replications, horizon: config.horizon, signals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::exact_conditional_filter;
    use crate::models::MobileParams;

    #[test]
    fn angle_wrapping_stays_in_the_principal_interval() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-3.5 * std::f64::consts::PI) - 0.5 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    /// Parameters tamed for tiny test ensembles: a short step and wide
    /// observation noise keep a handful of particles from starving the
    /// likelihood.
    fn tame_params() -> MobileParams {
        MobileParams { dt: 1.0, obs_cov_diag: [25.0, 25.0, 4.0], ..MobileParams::default() }
    }

    #[test]
    fn comparison_is_reproducible_and_well_formed() {
        let model = MobileModel::new(tame_params()).unwrap();
        let config = RmseConfig {
            islands: 6,
            particles: 16,
            ikf_islands: 4,
            horizon: 6,
            replications: 3,
            bootstrap_draws: 200,
        };
        let root = RandomStream::new(99, 0);
        let a = rmse_comparison(&model, &config, &root).unwrap();
        let b = rmse_comparison(&model, &config, &root).unwrap();
        assert_eq!(a.signals.len(), 3);
        for (x, y) in a.signals.iter().zip(&b.signals) {
            assert_eq!(x.island_filter_rmse, y.island_filter_rmse);
            assert_eq!(x.gaussian_filter_rmse, y.gaussian_filter_rmse);
            assert_eq!(x.ci_low, y.ci_low);
            assert_eq!(x.ci_high, y.ci_high);
            assert!(x.ci_low <= x.mean_difference && x.mean_difference <= x.ci_high);
            assert!(x.island_filter_rmse.is_finite() && x.gaussian_filter_rmse.is_finite());
        }
        assert_eq!(a.signals[0].signal, "speed");
    }

    #[test]
    fn gaussian_fixture_reduces_the_kalman_side_to_the_exact_filter() {
        // No jumps and a degenerate force kernel make the model exactly
        // linear-Gaussian conditional on the (deterministic) force path, so
        // the interacting Kalman filter with one island IS the exact filter.
        let params = MobileParams { jump_rate: 0.0, theta_cov_diag: [0.0, 0.0], ..tame_params() };
        let model = MobileModel::new(params).unwrap();
        let config = RmseConfig {
            islands: 2,
            particles: 8,
            ikf_islands: 1,
            horizon: 12,
            replications: 3,
            bootstrap_draws: 200,
        };
        let root = RandomStream::new(4242, 0);
        let comparison = rmse_comparison(&model, &config, &root).unwrap();

        // Recompute the exact-filter speed RMSE per replication.
        let reps = root.substream(labels::REPLICATION);
        let mut pooled = 0.0;
        for r in 0..config.replications {
            let rep = reps.substream(r as u64);
            let traj = simulate(&model, config.horizon, &rep);
            let steps = exact_conditional_filter(&model, &traj).unwrap();
            let mut acc = 0.0;
            for (n, step) in steps.iter().enumerate().take(config.horizon) {
                let e = step.filtered.mean()[2] - traj.state(n)[2];
                acc += e * e;
            }
            pooled += acc / config.horizon as f64;
        }
        let exact_rmse = (pooled / config.replications as f64).sqrt();

        let speed = &comparison.signals[0];
        assert!(
            (speed.gaussian_filter_rmse - exact_rmse).abs() < 1e-9,
            "Kalman speed RMSE {} vs exact filter {exact_rmse}",
            speed.gaussian_filter_rmse
        );
        // The force path is deterministic and shared with the truth, so the
        // Kalman side makes zero force error.
        assert!(comparison.signals[1].gaussian_filter_rmse < 1e-12);
        assert!(comparison.signals[2].gaussian_filter_rmse < 1e-12);
    }
}
