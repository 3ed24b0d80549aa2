use std::collections::HashMap;

use super::aggregate::{Aggregate, Emission, ParticleTrace};
use super::EngineError;
use crate::lattice::{Direction, Site, Source};
use crate::rng::{StepSource, StreamKey, WalkStream};

/// Hands out the walk `S_{z,j}` for a particle, starting at a given step.
pub trait WalkProvider: Sync {
    type Walk: StepSource;

    fn walk(&self, source: Source, index: u32, start_step: u64) -> Self::Walk;
}

/// Walks read from the counter-based streams of a master seed.
#[derive(Debug, Clone, Copy)]
pub struct StreamWalks {
    pub seed: u64,
}

impl WalkProvider for StreamWalks {
    type Walk = WalkStream;

    fn walk(&self, source: Source, index: u32, start_step: u64) -> WalkStream {
        WalkStream::at(&StreamKey::walk(self.seed, source, index), start_step)
    }
}

/// Hand-written walks, for fixtures. Running past the end of a script panics.
#[derive(Debug, Clone, Default)]
pub struct ScriptedWalks {
    scripts: HashMap<(Source, u32), Vec<Direction>>,
}

impl ScriptedWalks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, source: Source, index: u32, steps: Vec<Direction>) -> Self {
        self.scripts.insert((source, index), steps);
        self
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedWalk {
    steps: Vec<Direction>,
    pos: usize,
    label: (Source, u32),
}

impl StepSource for ScriptedWalk {
    fn next_step(&mut self) -> Direction {
        let d = *self.steps.get(self.pos).unwrap_or_else(|| {
            panic!(
                "scripted walk for {:?} exhausted after {} steps",
                self.label, self.pos
            )
        });
        self.pos += 1;
        d
    }
}

impl WalkProvider for ScriptedWalks {
    type Walk = ScriptedWalk;

    fn walk(&self, source: Source, index: u32, start_step: u64) -> ScriptedWalk {
        ScriptedWalk {
            steps: self.scripts.get(&(source, index)).cloned().unwrap_or_default(),
            pos: start_step as usize,
            label: (source, index),
        }
    }
}

/// Replaces every `-e_1` step by `+e_1`. The result is not a simple random
/// walk; it exists as a negative control for statistical tests.
#[derive(Debug, Clone, Copy)]
pub struct FoldedWalks<W> {
    pub inner: W,
}

pub struct FoldedWalk<S>(S);

impl<S: StepSource> StepSource for FoldedWalk<S> {
    fn next_step(&mut self) -> Direction {
        let d = self.0.next_step();
        if d == Direction::minus(0) {
            Direction::plus(0)
        } else {
            d
        }
    }
}

impl<W: WalkProvider> WalkProvider for FoldedWalks<W> {
    type Walk = FoldedWalk<W::Walk>;

    fn walk(&self, source: Source, index: u32, start_step: u64) -> Self::Walk {
        FoldedWalk(self.inner.walk(source, index, start_step))
    }
}

/// In-flight particle state.
#[derive(Debug, Clone)]
pub(crate) struct Walker {
    pub origin: Site,
    pub pos: Site,
    pub prev: Option<Site>,
    pub steps: u64,
    pub radius: u32,
    pub path: Option<Vec<Site>>,
}

impl Walker {
    pub(crate) fn new(origin: Source, record_path: bool) -> Self {
        let o = origin.site();
        Walker {
            origin: o,
            pos: o,
            prev: None,
            steps: 0,
            radius: 0,
            path: if record_path { Some(vec![o]) } else { None },
        }
    }

    /// Walker resumed at `pos` after `steps` steps (radius bookkeeping restarts
    /// from the resume point's projected distance).
    pub(crate) fn resumed(origin: Source, pos: Site, steps: u64, radius: u32) -> Self {
        Walker {
            origin: origin.site(),
            pos,
            prev: None,
            steps,
            radius,
            path: None,
        }
    }

    #[inline]
    pub(crate) fn step<S: StepSource>(&mut self, walk: &mut S) -> Result<(), EngineError> {
        let d = walk.next_step();
        let next = self.pos.step(d)?;
        self.prev = Some(self.pos);
        self.pos = next;
        self.steps += 1;
        if d.axis() != 0 {
            let r = next.hyperplane_distance(&self.origin) as u32;
            if r > self.radius {
                self.radius = r;
            }
        }
        if let Some(p) = self.path.as_mut() {
            p.push(next);
        }
        Ok(())
    }

    /// Steps until the current position is not occupied by `agg`.
    #[inline]
    pub(crate) fn run_until_outside<S: StepSource>(
        &mut self,
        walk: &mut S,
        agg: &Aggregate,
        budget: u64,
        emission: &Emission,
    ) -> Result<(), EngineError> {
        while agg.contains(&self.pos) {
            if self.steps >= budget {
                return Err(EngineError::StepBudgetExceeded {
                    origin: emission.source,
                    index: emission.index,
                    budget,
                });
            }
            self.step(walk)?;
        }
        Ok(())
    }
}

/// Walks a particle from `emission.source` until it first leaves `aggregate`.
pub fn advance_particle<S: StepSource>(
    walk: &mut S,
    emission: Emission,
    aggregate: &Aggregate,
    step_budget: u64,
    record_path: bool,
) -> Result<ParticleTrace, EngineError> {
    let mut w = Walker::new(emission.source, record_path);
    w.run_until_outside(walk, aggregate, step_budget, &emission)?;
    Ok(ParticleTrace {
        emission,
        path: w.path,
        settle_site: w.pos,
        entry_edge: w.prev.map(|p| (p, w.pos)),
        steps: w.steps,
        radius: w.radius,
    })
}
