//! Named experiment runners. Each turns one statement about the model into
//! a finite, reproducible measurement and returns a [`RunRecord`].
//!
//! Replicate `i` of an experiment always runs under
//! `replicate_seed(master_seed, i)`, so records do not depend on the number
//! of worker threads.

mod abelian;
pub mod golden;
mod geometry;
mod perco;
mod stabilization;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::coupling::CouplingError;
use crate::engine::{EngineError, DEFAULT_STEP_BUDGET};
use crate::lattice::{check_dim, LatticeError, Rational};
use crate::rng::{parse_seed, replicate_seed};

pub use abelian::{abelian_scan, AbelianArm};
pub use geometry::{
    coverage_scan, cone_scan, donut_levels, rooted_and_vacant_scan, strip_entry_scan,
    translation_test,
};
pub use perco::{pi_scan, radius_tail_scan};
pub use stabilization::{stabilization_scan_aggregate, stabilization_scan_forest};

/// Version of the JSONL / CSV record layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl From<toml::de::Error> for ExperimentError {
    fn from(e: toml::de::Error) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

fn de_seed<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Str(String),
    }
    match Repr::deserialize(d)? {
        Repr::Int(v) => Ok(v),
        Repr::Str(s) => parse_seed(&s).map_err(serde::de::Error::custom),
    }
}

/// Flat experiment configuration. Every key is optional; each experiment
/// reads the keys it needs (see `docs/config.md`). Unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub dim: usize,
    /// Emission horizon `n`.
    pub horizon: f64,
    /// Grid of horizons.
    pub horizons: Vec<f64>,
    /// Grid of window radii (`M` or `N`).
    pub windows: Vec<u32>,
    /// Strip half-width `K`.
    pub strip: u32,
    /// Emission window `ε` of the Boolean model.
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    /// Reference horizon `T` for radii.
    pub reference_horizon: f64,
    /// Reference window `M_ref` for radii.
    pub reference_window: u32,
    /// Radius of the source region for radii, rooted and vacant scans.
    pub region: u32,
    /// Window of the proxy aggregate; `0` picks an experiment default.
    pub proxy_window: u32,
    pub cone_epsilon: Rational,
    pub cone_alpha: Rational,
    pub levels: Vec<u32>,
    pub walks: u64,
    /// Shifts along the second coordinate axis.
    pub shifts: Vec<i32>,
    /// Explicit site set (coverage); used when non-empty.
    pub sites: Vec<Vec<i32>>,
    /// Radius of the coverage ball when `sites` is empty; absent means `S = ∅`.
    pub site_radius: Option<u32>,
    pub trials: u64,
    pub seeds: u64,
    #[serde(deserialize_with = "de_seed")]
    pub master_seed: u64,
    pub step_budget: u64,
    /// Additive slack of the multiscale check.
    pub slack: f64,
    /// Significance level of statistical checks.
    pub alpha: f64,
    /// Regression threshold; the corresponding check runs only when set.
    pub threshold: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: String::new(),
            dim: 2,
            horizon: 1.0,
            horizons: Vec::new(),
            windows: Vec::new(),
            strip: 0,
            epsilon: 0.1,
            epsilons: Vec::new(),
            reference_horizon: 2.0,
            reference_window: 64,
            region: 0,
            proxy_window: 0,
            cone_epsilon: Rational::integer(1),
            cone_alpha: Rational::new(4, 5).expect("4/5 is valid"),
            levels: Vec::new(),
            walks: 0,
            shifts: Vec::new(),
            sites: Vec::new(),
            site_radius: None,
            trials: 0,
            seeds: 1,
            master_seed: 0,
            step_budget: DEFAULT_STEP_BUDGET,
            slack: 0.01,
            alpha: 0.01,
            threshold: None,
        }
    }
}

impl ExperimentConfig {
    pub fn new(experiment: &str) -> Self {
        ExperimentConfig {
            experiment: experiment.to_string(),
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub(crate) fn check_common(&self) -> Result<(), ExperimentError> {
        check_dim(self.dim)?;
        if self.seeds == 0 {
            return Err(ExperimentError::Config("seeds must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn require(&self, ok: bool, what: &str) -> Result<(), ExperimentError> {
        if ok {
            Ok(())
        } else {
            Err(ExperimentError::Config(format!("{}: {}", self.experiment, what)))
        }
    }

    pub(crate) fn seed(&self, i: u64) -> u64 {
        replicate_seed(self.master_seed, i)
    }
}

/// Per-replicate measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: u64,
    pub seed: u64,
    pub data: Value,
}

/// Named pass/fail statement checked on the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub experiment: String,
    pub config: ExperimentConfig,
    pub replicates: Vec<Replicate>,
    /// Summary table; every row has the same keys in the same order.
    pub summary: Vec<Map<String, Value>>,
    pub checks: Vec<Check>,
    /// Not written to any output file.
    #[serde(skip)]
    pub wall_clock: std::time::Duration,
}

impl RunRecord {
    pub(crate) fn new(cfg: &ExperimentConfig) -> Self {
        RunRecord {
            schema_version: SCHEMA_VERSION,
            experiment: cfg.experiment.clone(),
            config: cfg.clone(),
            replicates: Vec::new(),
            summary: Vec::new(),
            checks: Vec::new(),
            wall_clock: std::time::Duration::ZERO,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One JSON object per line: replicates, then summary rows, then checks.
    /// Every line carries the schema version and the config echo.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), ExperimentError> {
        let config = serde_json::to_value(&self.config)?;
        let line = |kind: &str, body: Value| -> Value {
            let mut m = Map::new();
            m.insert("schema_version".into(), Value::from(self.schema_version));
            m.insert("experiment".into(), Value::from(self.experiment.clone()));
            m.insert("kind".into(), Value::from(kind));
            m.insert("config".into(), config.clone());
            m.insert("record".into(), body);
            Value::Object(m)
        };
        for r in &self.replicates {
            serde_json::to_writer(&mut w, &line("replicate", serde_json::to_value(r)?))?;
            w.write_all(b"\n")?;
        }
        for row in &self.summary {
            serde_json::to_writer(&mut w, &line("summary", Value::Object(row.clone())))?;
            w.write_all(b"\n")?;
        }
        for c in &self.checks {
            serde_json::to_writer(&mut w, &line("check", serde_json::to_value(c)?))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Summary table as CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ExperimentError> {
        let mut out = csv::Writer::from_writer(w);
        if let Some(first) = self.summary.first() {
            out.write_record(first.keys())?;
            for row in &self.summary {
                out.write_record(row.values().map(csv_cell))?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `<stem>.jsonl` and `<stem>.csv` next to `path`.
    pub fn write_files(&self, path: &Path) -> Result<(), ExperimentError> {
        let jsonl = path.with_extension("jsonl");
        let csv_path = path.with_extension("csv");
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        std::fs::write(jsonl, buf)?;
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(csv_path, buf)?;
        Ok(())
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Builds a summary row from `(key, value)` pairs.
pub(crate) fn row<I, K, V>(pairs: I) -> Map<String, Value>
where
    I: IntoIterator<Item = (K, V)>,
    K: Into<String>,
    V: Into<Value>,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

/// Runs `f(index, seed)` for every replicate in parallel; results come back
/// in index order.
pub(crate) fn fan_out<T, F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<(u64, u64, T)>, ExperimentError>
where
    T: Send,
    F: Fn(u64, u64) -> Result<T, ExperimentError> + Sync,
{
    (0..cfg.seeds)
        .into_par_iter()
        .map(|i| {
            let s = cfg.seed(i);
            f(i, s).map(|t| (i, s, t))
        })
        .collect()
}

/// One-sided trend check on proportions: each step may drop by at most the
/// sum of the two 95% half-widths.
pub(crate) fn non_decreasing(props: &[crate::stats::Proportion]) -> bool {
    props
        .windows(2)
        .all(|p| p[1].p_hat + p[0].half_width() + p[1].half_width() >= p[0].p_hat)
}

pub(crate) fn non_increasing(props: &[crate::stats::Proportion]) -> bool {
    props
        .windows(2)
        .all(|p| p[1].p_hat <= p[0].p_hat + p[0].half_width() + p[1].half_width())
}

/// Experiment identifiers accepted by [`run_experiment`].
pub const EXPERIMENTS: &[&str] = &[
    "stabilize-forest",
    "stabilize-aggregate",
    "cone-scan",
    "strip-scan",
    "translate-test",
    "rooted-vacant",
    "abelian",
    "coverage",
    "radius-tail",
    "pi-scan",
];

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    let start = std::time::Instant::now();
    let mut rec = dispatch(cfg)?;
    rec.wall_clock = start.elapsed();
    Ok(rec)
}

fn dispatch(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    match cfg.experiment.as_str() {
        "stabilize-forest" => stabilization_scan_forest(cfg),
        "stabilize-aggregate" => stabilization_scan_aggregate(cfg),
        "cone-scan" => cone_scan(cfg),
        "strip-scan" => strip_entry_scan(cfg),
        "translate-test" => translation_test(cfg),
        "rooted-vacant" => rooted_and_vacant_scan(cfg),
        "abelian" => abelian_scan(cfg, AbelianArm::Ordered),
        "coverage" => coverage_scan(cfg),
        "radius-tail" => radius_tail_scan(cfg),
        "pi-scan" => pi_scan(cfg),
        other => Err(ExperimentError::Config(format!(
            "unknown experiment {other:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}
