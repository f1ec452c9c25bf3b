//! L2 error surfaces over the two particle counts of the island filter.
//!
//! A surface fixes one trajectory and one oracle reference, then measures the
//! replicated L2 battery error of the island filter's filtered state at a
//! comparison step, for every requested (island count, particles-per-island)
//! cell. Cells are keyed by their counts, not by their position in the
//! sweep, so a cell recomputed in isolation reproduces the sweep's value
//! exactly.

use crate::diagnostics::battery::{l2_error, ScalarBattery};
use crate::error::{Error, Result};
use crate::fk::FkModel;
use crate::lipf::IslandSystem;
use crate::models::Trajectory;
use crate::rng::RandomStream;

/// Which particle count an extracted profile varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurfaceAxis {
    /// Vary the island count, holding particles per island fixed.
    Islands,
    /// Vary particles per island, holding the island count fixed.
    Particles,
}

/// Replicated error measurements for one (islands, particles) cell.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceCell {
    /// Number of islands.
    pub islands: usize,
    /// Particles per island.
    pub particles: usize,
    /// Root mean square of the per-replication L2 errors.
    pub rms_error: f64,
    /// Mean of the per-replication L2 errors.
    pub mean_error: f64,
    /// Sample variance of the per-replication L2 errors.
    pub error_variance: f64,
    /// Number of replications.
    pub replications: usize,
}

/// An error surface over island and particle counts.
#[derive(Clone, Debug)]
pub struct ErrorSurface {
    /// Island counts, in the order cells were computed.
    pub island_counts: Vec<usize>,
    /// Particle counts, in the order cells were computed.
    pub particle_counts: Vec<usize>,
    /// Step at which estimates were compared to the reference.
    pub comparison_step: usize,
    /// Cells, row-major over (island count, particle count).
    pub cells: Vec<SurfaceCell>,
}

impl ErrorSurface {
    /// The cell with the given counts, if present.
    pub fn cell(&self, islands: usize, particles: usize) -> Option<&SurfaceCell> {
        self.cells.iter().find(|c| c.islands == islands && c.particles == particles)
    }

    /// Extract `(count, rms error)` pairs along one axis with the other
    /// count held fixed, ready for a rate regression.
    pub fn profile(&self, axis: SurfaceAxis, fixed: usize) -> Result<Vec<(f64, f64)>> {
        let counts = match axis {
            SurfaceAxis::Islands => &self.island_counts,
            SurfaceAxis::Particles => &self.particle_counts,
        };
        counts
            .iter()
            .map(|&n| {
                let (islands, particles) = match axis {
                    SurfaceAxis::Islands => (n, fixed),
                    SurfaceAxis::Particles => (fixed, n),
                };
                self.cell(islands, particles)
                    .map(|c| (n as f64, c.rms_error))
                    .ok_or_else(|| Error::InvalidArgument(format!("surface has no ({islands}, {particles}) cell")))
            })
            .collect()
    }
}

/// Study design for an error surface.
#[derive(Clone, Debug)]
pub struct SurfaceConfig {
    /// Island counts to sweep.
    pub island_counts: Vec<usize>,
    /// Particle counts to sweep.
    pub particle_counts: Vec<usize>,
    /// Replications per cell. Rate studies need at least 30 to average the
    /// replication noise out of the regression.
    pub replications: usize,
    /// Step at which the filtered state is compared to the reference.
    pub comparison_step: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            island_counts: vec![25, 50, 100, 200, 400],
            particle_counts: vec![25, 50, 100, 200, 400],
            replications: 100,
            comparison_step: 50,
        }
    }
}

fn check_inputs<M: FkModel>(model: &M, trajectory: &Trajectory, reference: &[f64], config: &SurfaceConfig) -> Result<()> {
    if model.state_dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "error surfaces battery-test a scalar state, model has dimension {}",
            model.state_dim()
        )));
    }
    if config.comparison_step > trajectory.horizon() {
        return Err(Error::InvalidArgument(format!(
            "comparison step {} exceeds the trajectory horizon {}",
            config.comparison_step,
            trajectory.horizon()
        )));
    }
    if config.replications == 0 {
        return Err(Error::InvalidArgument("surface needs at least one replication".into()));
    }
    if reference.is_empty() {
        return Err(Error::InvalidArgument("surface needs a nonempty reference".into()));
    }
    Ok(())
}

/// Replicated L2 error of one (islands, particles) cell.
///
/// Replication `r` of a cell draws its randomness from
/// `stream.substream(islands).substream(particles).substream(r)`, so the
/// value depends only on the inputs and the cell's counts — never on which
/// other cells a sweep computes around it.
#[allow(clippy::too_many_arguments)]
pub fn surface_cell<M>(
    model: &M,
    trajectory: &Trajectory,
    battery: &ScalarBattery,
    reference: &[f64],
    islands: usize,
    particles: usize,
    config: &SurfaceConfig,
    stream: &RandomStream,
) -> Result<SurfaceCell>
where
    M: FkModel + Clone,
{
    check_inputs(model, trajectory, reference, config)?;
    let cell_stream = stream.substream(islands as u64).substream(particles as u64);
    let mut per_rep = Vec::with_capacity(config.replications);
    for r in 0..config.replications {
        let mut system = IslandSystem::init(model.clone(), islands, particles, &cell_stream.substream(r as u64))?;
        let mut means = None;
        for n in 0..=config.comparison_step {
            let cache = system.evaluate(trajectory.obs(n))?;
            if n == config.comparison_step {
                let mut values = Vec::with_capacity(islands * particles);
                let mut weights = Vec::with_capacity(islands * particles);
                for i in 0..islands {
                    values.extend(system.inner_states(i).iter().copied());
                    weights.extend(cache.inner_potentials(i).iter().copied());
                }
                means = Some(battery.weighted_means(&values, &weights)?);
            } else {
                system.step(&cache)?;
            }
        }
        per_rep.push(means.expect("comparison step is always reached"));
    }
    let errors: Vec<f64> = per_rep.iter().map(|m| l2_error(std::slice::from_ref(m), reference)).collect::<Result<_>>()?;
    let r = errors.len() as f64;
    let mean_error = errors.iter().sum::<f64>() / r;
    let rms_error = (errors.iter().map(|e| e * e).sum::<f64>() / r).sqrt();
    let error_variance = if errors.len() > 1 {
        errors.iter().map(|e| (e - mean_error) * (e - mean_error)).sum::<f64>() / (r - 1.0)
    } else {
        0.0
    };
    Ok(SurfaceCell { islands, particles, rms_error, mean_error, error_variance, replications: errors.len() })
}

/// Compute every cell of an error surface. Fails on the first cell that
/// errors; drivers that need to continue past failed cells call
/// [`surface_cell`] per cell instead.
pub fn compute_error_surface<M>(
    model: &M,
    trajectory: &Trajectory,
    battery: &ScalarBattery,
    reference: &[f64],
    config: &SurfaceConfig,
    stream: &RandomStream,
) -> Result<ErrorSurface>
where
    M: FkModel + Clone,
{
    check_inputs(model, trajectory, reference, config)?;
    if config.island_counts.is_empty() || config.particle_counts.is_empty() {
        return Err(Error::InvalidArgument("surface needs at least one count on each axis".into()));
    }
    let mut cells = Vec::with_capacity(config.island_counts.len() * config.particle_counts.len());
    for &islands in &config.island_counts {
        for &particles in &config.particle_counts {
            cells.push(surface_cell(model, trajectory, battery, reference, islands, particles, config, stream)?);
        }
    }
    Ok(ErrorSurface {
        island_counts: config.island_counts.clone(),
        particle_counts: config.particle_counts.clone(),
        comparison_step: config.comparison_step,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::grid::{GridFilter, GridSpec};
    use crate::models::{simulate, GrowthModel, GrowthParams, MobileModel, MobileParams};
    use crate::rng::{labels, RandomStream};

    fn growth() -> GrowthModel {
        GrowthModel::new(GrowthParams::default()).expect("default growth parameters are valid")
    }

    fn fixture() -> (GrowthModel, Trajectory, ScalarBattery, Vec<f64>, RandomStream) {
        let model = growth();
        let root = RandomStream::new(2024, 0);
        let traj = simulate(&model, 6, &root.substream(labels::SIMULATION));
        let spec = GridSpec { n_theta: 80, n_x: 120, ..GridSpec::default() };
        let summaries = GridFilter::run(model.clone(), spec, &traj, 6).unwrap();
        let battery = ScalarBattery::from_marginal(&summaries[5].filtered_x).unwrap();
        let reference = battery.reference_means(&summaries[5].filtered_x);
        (model, traj, battery, reference, root.substream(labels::ALGORITHM))
    }

    #[test]
    fn cell_values_are_reproducible_and_sweep_independent() {
        let (model, traj, battery, reference, stream) = fixture();
        let config = SurfaceConfig {
            island_counts: vec![4, 8],
            particle_counts: vec![4, 8],
            replications: 3,
            comparison_step: 5,
        };
        let surface = compute_error_surface(&model, &traj, &battery, &reference, &config, &stream).unwrap();
        assert_eq!(surface.cells.len(), 4);

        // Recomputing one cell in isolation gives bitwise the same numbers.
        let alone = surface_cell(&model, &traj, &battery, &reference, 8, 4, &config, &stream).unwrap();
        let swept = surface.cell(8, 4).unwrap();
        assert_eq!(alone.rms_error, swept.rms_error);
        assert_eq!(alone.mean_error, swept.mean_error);
        assert_eq!(alone.error_variance, swept.error_variance);
    }

    #[test]
    fn profiles_extract_rows_and_columns() {
        let (model, traj, battery, reference, stream) = fixture();
        let config = SurfaceConfig {
            island_counts: vec![4, 8],
            particle_counts: vec![4, 16],
            replications: 2,
            comparison_step: 5,
        };
        let surface = compute_error_surface(&model, &traj, &battery, &reference, &config, &stream).unwrap();
        let by_islands = surface.profile(SurfaceAxis::Islands, 16).unwrap();
        assert_eq!(by_islands.len(), 2);
        assert_eq!(by_islands[0].0, 4.0);
        assert_eq!(by_islands[1].0, 8.0);
        let by_particles = surface.profile(SurfaceAxis::Particles, 8).unwrap();
        assert_eq!(by_particles.len(), 2);
        assert!(surface.profile(SurfaceAxis::Islands, 999).is_err());
        for cell in &surface.cells {
            assert!(cell.rms_error.is_finite() && cell.rms_error > 0.0);
            assert!(cell.rms_error + 1e-15 >= cell.mean_error, "RMS dominates the mean");
        }
    }

    #[test]
    fn design_errors_are_rejected() {
        let (model, traj, battery, reference, stream) = fixture();
        let mut config = SurfaceConfig { replications: 0, comparison_step: 5, ..SurfaceConfig::default() };
        assert!(surface_cell(&model, &traj, &battery, &reference, 4, 4, &config, &stream).is_err());
        config.replications = 2;
        config.comparison_step = 99;
        assert!(surface_cell(&model, &traj, &battery, &reference, 4, 4, &config, &stream).is_err());

        // A vector-state model cannot be battery-tested.
        let mobile = MobileModel::new(MobileParams::default()).unwrap();
        let root = RandomStream::new(5, 0);
        let mtraj = simulate(&mobile, 3, &root.substream(labels::SIMULATION));
        let config = SurfaceConfig { comparison_step: 2, replications: 2, ..SurfaceConfig::default() };
        assert!(surface_cell(&mobile, &mtraj, &battery, &reference, 4, 4, &config, &stream).is_err());
    }
}
