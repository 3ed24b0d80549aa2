//! Regression thresholds frozen from pilot runs (see `docs/experiments.md`
//! for the pilot protocol). Checked by the acceptance suite.

/// Master seed of the frozen acceptance runs. Pilots use a different seed.
pub const MASTER_SEED: u64 = 0x1d1a_f0e5_7000_0001;

/// Forest stabilization, top pair `(40, 80)`, `d=2, n=30, K=5`, 200 seeds.
pub const FOREST_TOP_PAIR: f64 = 0.95;

/// Aggregate stabilization at `M=20`, `d=2, n=5`, 300 seeds.
pub const AGGREGATE_M20: f64 = 0.95;

/// Single-source shape: seeds (of 100) whose `A(10^4)` contains the ball of
/// radius `0.9 (10^4/π)^{1/2}`.
pub const SHAPE_SEEDS: u64 = 95;

/// Vacant lines at `n = 0.2`, region height 200: fraction of seeds with one.
pub const VACANT_LINES: f64 = 0.95;
