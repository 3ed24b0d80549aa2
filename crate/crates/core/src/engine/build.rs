use serde::{Deserialize, Serialize};

use super::aggregate::{Aggregate, Emission, Forest, Insertion, ParticleTrace};
use super::walk::{advance_particle, StreamWalks, WalkProvider};
use super::EngineError;
use crate::lattice::{check_dim, LatticeError, Source};
use crate::rng::{clock_tops, StreamKey};

/// Per-particle cap on walk length.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

/// Hyperplane ball of sources `center + H_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub center: Source,
    pub radius: u32,
}

impl Window {
    /// `H_M`, centred at the origin.
    pub fn centered(dim: usize, radius: u32) -> Result<Self, LatticeError> {
        Ok(Window {
            center: Source::origin(dim)?,
            radius,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn contains(&self, z: &Source) -> bool {
        z.site().hyperplane_distance(&self.center.site()) <= self.radius as u64
    }

    /// Sources in lexicographic order.
    pub fn sources(&self) -> Vec<Source> {
        self.center.ball(self.radius)
    }

    /// Sources ordered by level around the centre, lexicographic within a level.
    pub fn sources_by_level(&self) -> Vec<Source> {
        let mut v = self.sources();
        let c = self.center.site();
        v.sort_by_key(|z| (z.site().hyperplane_distance(&c), *z));
        v
    }
}

/// Parameters of one time-ordered build `A_n[M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dim: usize,
    pub window: u32,
    pub horizon: f64,
    pub seed: u64,
    pub step_budget: u64,
}

impl SimConfig {
    pub fn new(dim: usize, window: u32, horizon: f64, seed: u64) -> Self {
        SimConfig {
            dim,
            window,
            horizon,
            seed,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }

    pub fn source_window(&self) -> Result<Window, LatticeError> {
        check_dim(self.dim)?;
        Window::centered(self.dim, self.window)
    }
}

/// All emissions of the sources of `window` during `(0, horizon]`, in time
/// order (ties broken by source, then particle index).
pub fn schedule_window(seed: u64, window: &Window, horizon: f64) -> Vec<Emission> {
    let mut out = Vec::new();
    for z in window.sources() {
        let tops = clock_tops(&StreamKey::clock(seed, z), horizon);
        for (j, t) in tops.times.iter().enumerate() {
            out.push(Emission {
                source: z,
                time: *t,
                index: j as u32 + 1,
            });
        }
    }
    out.sort_by(|a, b| a.order(b));
    out
}

pub fn schedule_emissions(
    seed: u64,
    dim: usize,
    window: u32,
    horizon: f64,
) -> Result<Vec<Emission>, LatticeError> {
    Ok(schedule_window(seed, &Window::centered(dim, window)?, horizon))
}

/// Sends `emissions` one after the other into `agg`.
pub fn grow<W: WalkProvider>(
    agg: &mut Aggregate,
    emissions: &[Emission],
    walks: &W,
    step_budget: u64,
    record_paths: bool,
) -> Result<Vec<ParticleTrace>, EngineError> {
    let mut traces = Vec::with_capacity(emissions.len());
    for e in emissions {
        let mut walk = walks.walk(e.source, e.index, 0);
        let t = advance_particle(&mut walk, *e, agg, step_budget, record_paths)?;
        agg.insert(Insertion {
            site: t.settle_site,
            emission: *e,
            parent: t.entry_edge.map(|(p, _)| p),
            steps: t.steps,
        });
        traces.push(t);
    }
    Ok(traces)
}

/// Output of a time-ordered build.
#[derive(Debug, Clone)]
pub struct Build {
    pub aggregate: Aggregate,
    pub forest: Forest,
    pub traces: Vec<ParticleTrace>,
}

/// `A_n[M]` and its forest `F_n[M]`.
pub fn build_aggregate_forest(cfg: &SimConfig) -> Result<Build, EngineError> {
    build_window(cfg.seed, &cfg.source_window()?, cfg.horizon, cfg.step_budget, false)
}

/// Time-ordered build over an arbitrary source window.
pub fn build_window(
    seed: u64,
    window: &Window,
    horizon: f64,
    step_budget: u64,
    record_paths: bool,
) -> Result<Build, EngineError> {
    let emissions = schedule_window(seed, window, horizon);
    let mut aggregate = Aggregate::new(window.dim());
    let traces = grow(
        &mut aggregate,
        &emissions,
        &StreamWalks { seed },
        step_budget,
        record_paths,
    )?;
    let forest = aggregate.forest();
    Ok(Build {
        aggregate,
        forest,
        traces,
    })
}

/// Aggregate only, skipping the forest and the traces.
pub fn build_aggregate(cfg: &SimConfig) -> Result<Aggregate, EngineError> {
    let window = cfg.source_window()?;
    let emissions = schedule_window(cfg.seed, &window, cfg.horizon);
    let mut aggregate = Aggregate::new(cfg.dim);
    grow(
        &mut aggregate,
        &emissions,
        &StreamWalks { seed: cfg.seed },
        cfg.step_budget,
        false,
    )?;
    Ok(aggregate)
}

/// `A*_n[M]`: every source sends all of its `N_z` particles in one go,
/// sources taken level by level from the centre, lexicographically within a
/// level. Particle `j` of `z` uses the same walk as in the time-ordered build.
pub fn build_ordered_aggregate(cfg: &SimConfig) -> Result<Aggregate, EngineError> {
    build_ordered_with(cfg, &StreamWalks { seed: cfg.seed })
}

pub fn build_ordered_with<W: WalkProvider>(
    cfg: &SimConfig,
    walks: &W,
) -> Result<Aggregate, EngineError> {
    let window = cfg.source_window()?;
    let mut emissions = Vec::new();
    for z in window.sources_by_level() {
        let tops = clock_tops(&StreamKey::clock(cfg.seed, z), cfg.horizon);
        for (j, t) in tops.times.iter().enumerate() {
            emissions.push(Emission {
                source: z,
                time: *t,
                index: j as u32 + 1,
            });
        }
    }
    let mut aggregate = Aggregate::new(cfg.dim);
    grow(&mut aggregate, &emissions, walks, cfg.step_budget, false)?;
    Ok(aggregate)
}

/// Classical IDLA `A(count)`: `count` particles from the origin.
pub fn single_source_aggregate(
    seed: u64,
    dim: usize,
    count: u32,
    step_budget: u64,
) -> Result<Aggregate, EngineError> {
    let origin = Source::origin(dim)?;
    let emissions: Vec<Emission> = (1..=count)
        .map(|j| Emission {
            source: origin,
            time: j as f64,
            index: j,
        })
        .collect();
    let mut aggregate = Aggregate::new(dim);
    grow(
        &mut aggregate,
        &emissions,
        &StreamWalks { seed },
        step_budget,
        false,
    )?;
    Ok(aggregate)
}
