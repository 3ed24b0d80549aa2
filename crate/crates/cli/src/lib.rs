//! `idla` command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use idla_core::coupling::{
    classify_discrepancies, extract_chains, run_natural_coupling, run_special_coupling,
};
use idla_core::engine::{Aggregate, DEFAULT_STEP_BUDGET};
use idla_core::experiments::{run_experiment, abelian_scan, AbelianArm, SCHEMA_VERSION};
use idla_core::figure::{emit_coupling_figure, emit_figure, FigureStyle};
use idla_core::lattice::Source;
use idla_core::percolation::{
    clusters, find_descending_chain, origin_cluster_diameter, radii_table, BooleanModel, TimedBall,
};
use idla_core::rng::parse_seed;
use idla_core::{BuildMode, ExperimentConfig, RunRecord, Snapshot, SnapshotHeader};

fn seed_arg(s: &str) -> Result<u64, String> {
    parse_seed(s)
}

#[derive(Debug, Parser)]
#[command(name = "idla", version, about = "Multi-source IDLA forests: simulation, couplings and experiments")]
pub struct Cli {
    /// Master seed (decimal or 0x-hex).
    #[arg(long, global = true, value_parser = seed_arg)]
    seed: Option<u64>,
    /// Lattice dimension d (2 to 4).
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Output file (snapshot, JSONL, SVG) or output stem for experiments.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Per-particle cap on walk steps.
    #[arg(long, global = true)]
    step_budget: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct SimArgs {
    /// Source window radius M.
    #[arg(short = 'M', long = "window")]
    window: Option<u32>,
    /// Emission horizon n.
    #[arg(short = 'n', long = "horizon")]
    horizon: Option<f64>,
}

#[derive(Debug, Args, Clone)]
struct PairArgs {
    /// Smaller window M.
    #[arg(short = 'M', long = "window")]
    window: u32,
    /// Larger window M'.
    #[arg(long)]
    large: u32,
    /// Emission horizon n.
    #[arg(short = 'n', long = "horizon")]
    horizon: f64,
}

#[derive(Debug, Args, Clone)]
struct RadiiArgs {
    /// Emission window ε.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Reference horizon T.
    #[arg(short = 'T', long = "reference-horizon", default_value_t = 2.0)]
    reference_horizon: f64,
    /// Reference window M_ref.
    #[arg(long, default_value_t = 64)]
    m_ref: u32,
    /// Radius of the source region.
    #[arg(long, default_value_t = 16)]
    region: u32,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build A_n[M] and write a snapshot.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Level-ordered build A*_n[M] instead of the time-ordered one.
        #[arg(long)]
        ordered: bool,
    },
    /// Forest edges of F_n[M] as JSONL.
    Forest {
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Natural or special coupling of two windows; event log as JSONL.
    Couple {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long)]
        special: bool,
    },
    /// Chains of changes between two windows as JSONL.
    Chains {
        #[command(flatten)]
        pair: PairArgs,
        /// Strip half-width K used to flag chains reaching Z_K.
        #[arg(short = 'K', long = "strip", default_value_t = 0)]
        strip: u32,
    },
    /// Radii R((z,t),T) against a frozen reference, as JSONL.
    Radii {
        #[command(flatten)]
        radii: RadiiArgs,
    },
    /// Boolean model summary: clusters, degrees, descending chains.
    Boolean {
        #[command(flatten)]
        radii: RadiiArgs,
        /// Target strip of the descending-chain search.
        #[arg(short = 'K', long = "strip", default_value_t = 0)]
        strip: u32,
    },
    /// Estimate π_ε(M) over the config's ε and M grid.
    PiScan,
    /// Forest stabilization fractions over consecutive windows.
    StabilizeForest,
    /// Aggregate agreement inside Z_M between windows 2M and 4M.
    StabilizeAggregate,
    /// Frequency of sites outside both the strip and the cone.
    ConeScan,
    /// Free walks from level L: strip entry and donut crossings.
    StripScan,
    /// Chi-square comparison of time-ordered and level-ordered builds.
    Abelian {
        /// Replace the level-ordered arm by the folded-walk negative control.
        #[arg(long)]
        negative_control: bool,
    },
    /// Homogeneity of box counts under translations along H.
    TranslateTest,
    /// Coverage-time fractions of a site set over horizons.
    Coverage,
    /// Any experiment named by the `experiment` key of the config.
    Run,
    /// SVG of a snapshot's forest, or of a coupled pair when no snapshot is given.
    Figure {
        snapshot: Option<PathBuf>,
        #[arg(short = 'M', long = "window")]
        window: Option<u32>,
        #[arg(long)]
        large: Option<u32>,
        #[arg(short = 'n', long = "horizon")]
        horizon: Option<f64>,
        #[arg(long)]
        special: bool,
    },
    /// Check a snapshot's integrity and replay it bit-exactly.
    VerifySnapshot { snapshot: PathBuf },
}

/// Keys of a simulation config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimFile {
    d: Option<usize>,
    #[serde(rename = "M")]
    m: Option<u32>,
    n: Option<f64>,
    seed: Option<toml::Value>,
    step_budget: Option<u64>,
}

struct Globals {
    seed: u64,
    dim: usize,
    step_budget: u64,
    out: Option<PathBuf>,
}

fn sim_params(cli: &Cli, sim: &SimArgs) -> Result<(Globals, u32, f64)> {
    let file: SimFile = match &cli.config {
        Some(p) => toml::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => SimFile::default(),
    };
    let file_seed = match &file.seed {
        None => None,
        Some(toml::Value::Integer(v)) => Some(u64::try_from(*v).context("seed must be non-negative")?),
        Some(toml::Value::String(s)) => Some(parse_seed(s).map_err(anyhow::Error::msg)?),
        Some(v) => bail!("seed must be an integer or a string, got {v}"),
    };
    let g = Globals {
        seed: cli.seed.or(file_seed).unwrap_or(0),
        dim: cli.dim.or(file.d).unwrap_or(2),
        step_budget: cli.step_budget.or(file.step_budget).unwrap_or(DEFAULT_STEP_BUDGET),
        out: cli.out.clone(),
    };
    let m = sim.window.or(file.m).context("the window M is required (-M or `M` in the config)")?;
    let n = sim.horizon.or(file.n).context("the horizon n is required (-n or `n` in the config)")?;
    Ok((g, m, n))
}

fn globals(cli: &Cli) -> Globals {
    Globals {
        seed: cli.seed.unwrap_or(0),
        dim: cli.dim.unwrap_or(2),
        step_budget: cli.step_budget.unwrap_or(DEFAULT_STEP_BUDGET),
        out: cli.out.clone(),
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// JSONL line with provenance fields.
fn line(w: &mut dyn Write, kind: &str, config: &Value, record: Value) -> Result<()> {
    let mut m = Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("kind".into(), json!(kind));
    m.insert("config".into(), config.clone());
    m.insert("record".into(), record);
    serde_json::to_writer(&mut *w, &Value::Object(m))?;
    w.write_all(b"\n")?;
    Ok(())
}

fn experiment_config(cli: &Cli, name: &str) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if !name.is_empty() {
        if !cfg.experiment.is_empty() && cfg.experiment != name {
            bail!("config is for experiment `{}`, not `{name}`", cfg.experiment);
        }
        cfg.experiment = name.to_string();
    }
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(d) = cli.dim {
        cfg.dim = d;
    }
    if let Some(b) = cli.step_budget {
        cfg.step_budget = b;
    }
    Ok(cfg)
}

fn report(rec: &RunRecord, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => rec.write_files(p)?,
        None => rec.write_csv(std::io::stdout().lock())?,
    }
    for c in &rec.checks {
        eprintln!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    eprintln!("wall clock: {:.3}s", rec.wall_clock.as_secs_f64());
    Ok(())
}

fn pair_config(g: &Globals, p: &PairArgs) -> Value {
    json!({
        "d": g.dim, "M": p.window, "M_large": p.large, "n": p.horizon,
        "seed": g.seed, "step_budget": g.step_budget,
    })
}

fn coupled_pair(g: &Globals, p: &PairArgs, special: bool) -> Result<(Aggregate, Aggregate)> {
    if special {
        let r = run_special_coupling(g.seed, g.dim, p.window, p.large, p.horizon, g.step_budget)?;
        Ok((r.small, r.large))
    } else {
        let r = run_natural_coupling(g.seed, g.dim, p.window, p.large, p.horizon, g.step_budget)?;
        let mut s = r.ladder.states;
        let large = s.pop().unwrap();
        Ok((s.pop().unwrap(), large))
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { sim, ordered } => {
            let (g, m, n) = sim_params(cli, sim)?;
            let out = g.out.clone().context("simulate needs --out for the snapshot")?;
            let snap = Snapshot::build(SnapshotHeader {
                dim: g.dim,
                mode: if *ordered { BuildMode::LevelOrdered } else { BuildMode::TimeOrdered },
                window: m,
                horizon: n,
                seed: g.seed,
                step_budget: g.step_budget,
            })?;
            snap.save(&out)?;
            let f = snap.aggregate.forest();
            println!(
                "{}",
                json!({ "sites": snap.aggregate.len(), "roots": f.roots.len(), "snapshot": out })
            );
        }
        Command::Forest { sim } => {
            let (g, m, n) = sim_params(cli, sim)?;
            let snap = Snapshot::build(SnapshotHeader {
                dim: g.dim,
                mode: BuildMode::TimeOrdered,
                window: m,
                horizon: n,
                seed: g.seed,
                step_budget: g.step_budget,
            })?;
            let config = json!({ "d": g.dim, "M": m, "n": n, "seed": g.seed, "step_budget": g.step_budget });
            let f = snap.aggregate.forest();
            let mut w = sink(&g.out)?;
            for ins in snap.aggregate.insertions() {
                line(
                    &mut *w,
                    "vertex",
                    &config,
                    json!({
                        "site": ins.site.coords(),
                        "parent": ins.parent.map(|p| p.coords().to_vec()),
                        "root": f.root_of(&ins.site).map(|r| r.coords().to_vec()),
                        "source": ins.emission.source.site().coords(),
                        "index": ins.emission.index,
                        "time": ins.emission.time,
                    }),
                )?;
            }
            w.flush()?;
        }
        Command::Couple { pair, special } => {
            let g = globals(cli);
            let config = pair_config(&g, pair);
            let mut w = sink(&g.out)?;
            let (small, large) = if *special {
                let r = run_special_coupling(g.seed, g.dim, pair.window, pair.large, pair.horizon, g.step_budget)?;
                for e in &r.log {
                    line(&mut *w, "special_event", &config, serde_json::to_value(e)?)?;
                }
                line(&mut *w, "audit", &config, serde_json::to_value(r.audit)?)?;
                (r.small, r.large)
            } else {
                let r = run_natural_coupling(g.seed, g.dim, pair.window, pair.large, pair.horizon, g.step_budget)?;
                for e in &r.log {
                    line(&mut *w, "ladder_event", &config, serde_json::to_value(e)?)?;
                }
                let mut s = r.ladder.states;
                let large = s.pop().unwrap();
                (s.pop().unwrap(), large)
            };
            let rep = classify_discrepancies(&small, &large)?;
            line(
                &mut *w,
                "discrepancies",
                &config,
                json!({
                    "small": small.len(), "large": large.len(),
                    "red": rep.red.len(), "blue": rep.blue.len(),
                    "blue_emission": rep.blue_emission.len(), "blue_edge": rep.blue_edge.len(),
                    "green_edges": rep.green_edges.len(),
                }),
            )?;
            w.flush()?;
        }
        Command::Chains { pair, strip } => {
            let g = globals(cli);
            let config = pair_config(&g, pair);
            let r = idla_core::coupling::run_natural_ladder(
                g.seed,
                g.dim,
                &[pair.window, pair.large],
                pair.horizon,
                g.step_budget,
                true,
            )?;
            let mut w = sink(&g.out)?;
            for c in extract_chains(&r.log, 0, 1) {
                let mut v = serde_json::to_value(&c)?;
                v["reaches_strip"] = json!(c.reaches_strip(*strip));
                v["valid"] = json!(c.validate().is_ok());
                line(&mut *w, "chain", &config, v)?;
            }
            w.flush()?;
        }
        Command::Radii { radii } => {
            let g = globals(cli);
            let region = Source::origin(g.dim)?.ball(radii.region);
            let t = radii_table(g.seed, g.dim, &region, radii.epsilon, radii.reference_horizon, radii.m_ref, g.step_budget)?;
            let config = json!({
                "d": g.dim, "epsilon": radii.epsilon, "T": radii.reference_horizon,
                "M_ref": radii.m_ref, "region": radii.region, "seed": g.seed,
            });
            let mut w = sink(&g.out)?;
            for r in &t.records {
                line(&mut *w, "radius", &config, serde_json::to_value(r)?)?;
            }
            w.flush()?;
        }
        Command::Boolean { radii, strip } => {
            let g = globals(cli);
            let region = Source::origin(g.dim)?.ball(radii.region);
            let t = radii_table(g.seed, g.dim, &region, radii.epsilon, radii.reference_horizon, radii.m_ref, g.step_budget)?;
            let model = BooleanModel::from_records(g.dim, &t.records, radii.epsilon, radii.reference_horizon);
            let cl = clusters(&model);
            let balls: Vec<TimedBall> = t.records.iter().map(TimedBall::from).collect();
            let chain = find_descending_chain(&balls, *strip, radii.region);
            let config = json!({
                "d": g.dim, "epsilon": radii.epsilon, "T": radii.reference_horizon,
                "M_ref": radii.m_ref, "region": radii.region, "K": strip, "seed": g.seed,
            });
            let mut w = sink(&g.out)?;
            line(
                &mut *w,
                "boolean_model",
                &config,
                json!({
                    "centers": model.len(),
                    "clusters": cl.len(),
                    "largest_cluster": cl.iter().map(|c| c.members.len()).max().unwrap_or(0),
                    "mean_degree": model.mean_degree(),
                    "origin_cluster_diameter": origin_cluster_diameter(&model),
                    "untrusted_records": t.untrusted(),
                    "descending_chain": chain,
                }),
            )?;
            w.flush()?;
        }
        Command::PiScan => run_named(cli, "pi-scan")?,
        Command::StabilizeForest => run_named(cli, "stabilize-forest")?,
        Command::StabilizeAggregate => run_named(cli, "stabilize-aggregate")?,
        Command::ConeScan => run_named(cli, "cone-scan")?,
        Command::StripScan => run_named(cli, "strip-scan")?,
        Command::TranslateTest => run_named(cli, "translate-test")?,
        Command::Coverage => run_named(cli, "coverage")?,
        Command::Run => run_named(cli, "")?,
        Command::Abelian { negative_control } => {
            let cfg = experiment_config(cli, "abelian")?;
            let arm = if *negative_control { AbelianArm::Folded } else { AbelianArm::Ordered };
            let start = std::time::Instant::now();
            let mut rec = abelian_scan(&cfg, arm)?;
            rec.wall_clock = start.elapsed();
            report(&rec, &cli.out)?;
            if !rec.passed() && !*negative_control {
                bail!("abelian test failed");
            }
        }
        Command::Figure { snapshot, window, large, horizon, special } => {
            let g = globals(cli);
            let style = FigureStyle::default();
            let svg = match snapshot {
                Some(p) => {
                    let s = Snapshot::load(p)?;
                    let h = s.header;
                    emit_figure(
                        &s.aggregate,
                        &format!("forest d={} M={} n={} seed={}", h.dim, h.window, h.horizon, h.seed),
                        &style,
                    )?
                }
                None => {
                    let pair = PairArgs {
                        window: window.context("a coupling figure needs -M")?,
                        large: large.context("a coupling figure needs --large")?,
                        horizon: horizon.context("a coupling figure needs -n")?,
                    };
                    let (small, big) = coupled_pair(&g, &pair, *special)?;
                    let rep = classify_discrepancies(&small, &big)?;
                    emit_coupling_figure(
                        &small,
                        &big,
                        &rep,
                        &format!(
                            "{} coupling M={} M'={} n={} seed={}",
                            if *special { "special" } else { "natural" },
                            pair.window,
                            pair.large,
                            pair.horizon,
                            g.seed
                        ),
                        &style,
                    )?
                }
            };
            let mut w = sink(&g.out)?;
            w.write_all(svg.as_bytes())?;
            w.flush()?;
        }
        Command::VerifySnapshot { snapshot } => {
            let s = Snapshot::load(snapshot)?;
            s.verify_replay()?;
            println!(
                "{}: ok ({} sites, d={}, M={}, n={}, seed={})",
                snapshot.display(),
                s.aggregate.len(),
                s.header.dim,
                s.header.window,
                s.header.horizon,
                s.header.seed
            );
        }
    }
    Ok(())
}

fn run_named(cli: &Cli, name: &str) -> Result<()> {
    let cfg = experiment_config(cli, name)?;
    let rec = run_experiment(&cfg)?;
    report(&rec, &cli.out)?;
    if !rec.passed() {
        bail!("{} failed checks", rec.checks.iter().filter(|c| !c.passed).count());
    }
    Ok(())
}

/// Parses `argv` and runs the command: 0 on success, 1 on a checked error,
/// 2 on a usage error.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return 1;
        }
    }
    match execute(&cli) {
        Ok(()) => 0,
        // output piped into a reader that stopped early, e.g. `head`
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>()
                    .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            }) =>
        {
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Path helper for tests and scripts: `<stem>.jsonl` / `<stem>.csv`.
pub fn experiment_outputs(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("jsonl"), stem.with_extension("csv"))
}
