//! Fixtures shared by the benchmarks in `benches/`.

use idla_core::engine::DEFAULT_STEP_BUDGET;
use idla_core::{BuildMode, SimConfig, Snapshot, SnapshotHeader, Source};

pub const SEED: u64 = 0xbe7c_0001;

pub fn sim(dim: usize, window: u32, horizon: f64) -> SimConfig {
    SimConfig::new(dim, window, horizon, SEED)
}

pub fn snapshot(window: u32, horizon: f64) -> Snapshot {
    Snapshot::build(SnapshotHeader {
        dim: 2,
        mode: BuildMode::TimeOrdered,
        window,
        horizon,
        seed: SEED,
        step_budget: DEFAULT_STEP_BUDGET,
    })
    .expect("fixture builds")
}

/// Deterministic ball layout on a line of the hyperplane.
pub fn balls(count: usize) -> Vec<(Source, u32)> {
    (0..count)
        .map(|i| {
            let y = ((i * 7919) % (4 * count)) as i32 - 2 * count as i32;
            (Source::from_hyperplane(&[y, (i % 13) as i32]).unwrap(), (i % 5) as u32)
        })
        .collect()
}
