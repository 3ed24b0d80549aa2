//! IDLA aggregates and forests: time-ordered `A_n[M]` / `F_n[M]`, the
//! level-ordered `A*_n[M]`, and single-source `A(n)`.

mod aggregate;
mod build;
mod occupancy;
mod walk;

use thiserror::Error;

use crate::lattice::{LatticeError, Source};

pub use aggregate::{Aggregate, Emission, Forest, Insertion, ParticleTrace};
pub use build::{
    build_aggregate, build_aggregate_forest, build_ordered_aggregate, build_ordered_with,
    build_window, grow, schedule_emissions, schedule_window, single_source_aggregate, Build,
    SimConfig, Window, DEFAULT_STEP_BUDGET,
};
pub use walk::{
    advance_particle, FoldedWalk, FoldedWalks, ScriptedWalk, ScriptedWalks, StreamWalks,
    WalkProvider,
};
pub(crate) use walk::Walker;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("particle {index} of source {origin} exceeded the step budget of {budget}")]
    StepBudgetExceeded {
        origin: Source,
        index: u32,
        budget: u64,
    },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}
