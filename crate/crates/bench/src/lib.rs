//! Shared fixtures for the criterion benchmarks: warmed-up filters and
//! deterministic trajectories, so each benchmark measures one steady-state
//! filter step rather than initialization.

use islandpf_core::diagnostics::{GridFilter, GridSpec};
use islandpf_core::models::{simulate, GrowthModel, GrowthParams, MobileModel, MobileParams, Trajectory};
use islandpf_core::rng::{labels, RandomStream};
use islandpf_core::{IkfSystem, IslandSystem};

/// Benchmark seed; arbitrary but fixed so criterion compares like with like.
pub const BENCH_SEED: u64 = 90_210;

/// A growth-model trajectory long enough for warm-up plus one step.
pub fn growth_trajectory(horizon: usize) -> (GrowthModel, Trajectory) {
    let model = GrowthModel::new(GrowthParams::default()).expect("growth defaults are valid");
    let root = RandomStream::new(BENCH_SEED, 0);
    let traj = simulate(&model, horizon, &root.substream(labels::SIMULATION));
    (model, traj)
}

/// A mobile-model trajectory long enough for warm-up plus one step.
pub fn mobile_trajectory(horizon: usize) -> (MobileModel, Trajectory) {
    let model = MobileModel::new(MobileParams::default()).expect("mobile defaults are valid");
    let root = RandomStream::new(BENCH_SEED, 0);
    let traj = simulate(&model, horizon, &root.substream(labels::SIMULATION));
    (model, traj)
}

/// An island filter advanced `warm` steps into a growth trajectory.
pub fn warmed_island_system(n1: usize, n2: usize, warm: usize) -> (IslandSystem<GrowthModel>, Trajectory) {
    let (model, traj) = growth_trajectory(warm + 1);
    let root = RandomStream::new(BENCH_SEED, 0);
    let mut system = IslandSystem::init(model, n1, n2, &root.substream(labels::ALGORITHM)).expect("init");
    for n in 0..warm {
        let cache = system.evaluate(traj.obs(n)).expect("evaluate");
        system.step(&cache).expect("step");
    }
    (system, traj)
}

/// An interacting Kalman filter advanced `warm` steps into a mobile trajectory.
pub fn warmed_ikf_system(n1: usize, warm: usize) -> (IkfSystem<MobileModel>, Trajectory) {
    let (model, traj) = mobile_trajectory(warm + 1);
    let root = RandomStream::new(BENCH_SEED, 0);
    let mut system = IkfSystem::init(model, n1, &root.substream(labels::ALGORITHM)).expect("init");
    for n in 0..warm {
        let cache = system.evaluate(traj.obs(n)).expect("evaluate");
        system.step(&cache).expect("step");
    }
    (system, traj)
}

/// A grid filter advanced `warm` steps into a growth trajectory.
pub fn warmed_grid_filter(cells: usize, warm: usize) -> (GridFilter<GrowthModel>, Trajectory) {
    let (model, traj) = growth_trajectory(warm + 1);
    let spec = GridSpec { n_theta: cells, n_x: cells, ..GridSpec::default() };
    let mut filter = GridFilter::new(model, spec).expect("grid");
    for n in 0..warm {
        let cache = filter.evaluate(traj.obs(n)).expect("evaluate");
        filter.step(&cache).expect("step");
    }
    (filter, traj)
}
