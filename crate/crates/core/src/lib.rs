//! Deterministic simulation and analysis of multi-source IDLA forests on
//! `Z^d` with sources on the hyperplane `{0} x Z^{d-1}`.

pub mod coupling;
pub mod engine;
pub mod experiments;
pub mod figure;
pub mod lattice;
pub mod percolation;
pub mod rng;
pub mod snapshot;
pub mod stats;

pub use engine::{Aggregate, Emission, EngineError, Forest, ParticleTrace, SimConfig, Window};
pub use lattice::{ConeSpec, Direction, LatticeError, Rational, Site, Source};
pub use rng::{StreamKey, StreamTag};
pub use experiments::{ExperimentConfig, ExperimentError, RunRecord};
pub use snapshot::{BuildMode, Snapshot, SnapshotError, SnapshotHeader};
