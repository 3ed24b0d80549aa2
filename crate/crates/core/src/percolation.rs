//! Radii of projected trajectories against frozen reference aggregates, the
//! discrete Boolean models built from them, clusters, descending chains and
//! the localized escape event with its Monte Carlo estimate.

use std::collections::BTreeMap;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{
    build_aggregate, build_window, Aggregate, EngineError, Emission, ParticleTrace, SimConfig,
    StreamWalks, WalkProvider, Window,
};
use crate::lattice::{hball_meets_strip, hball_overlap, hsphere_size, Source};
use crate::rng::{clock_tops, replicate_seed, StepSource, StreamKey};
use crate::stats::Proportion;

/// Smallest `r` with `p_H(path) ⊆ B(source, r)`.
pub fn trace_radius(trace: &ParticleTrace) -> u32 {
    match &trace.path {
        Some(path) => {
            let z = trace.emission.source.site();
            path.iter()
                .map(|s| s.hyperplane_distance(&z) as u32)
                .max()
                .unwrap_or(0)
        }
        None => trace.radius,
    }
}

/// Aggregate a radius was measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// `A_T[M]` over the centred window `H_M`.
    Window { radius: u32, horizon: f64 },
    /// `A_T[B(x, r)]`.
    Ball {
        center: Source,
        radius: u32,
        horizon: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusRecord {
    /// Starting point `(z, t)` together with its particle index.
    pub start: Emission,
    pub radius: u32,
    /// The walk's projection stayed inside the level where the reference is
    /// trusted to match the infinite-volume aggregate.
    pub trusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiiTable {
    pub reference: Reference,
    pub epsilon: f64,
    pub trust_level: Option<u32>,
    pub records: Vec<RadiusRecord>,
}

impl RadiiTable {
    pub fn untrusted(&self) -> usize {
        self.records.iter().filter(|r| !r.trusted).count()
    }
}

/// Walks particle `e` against `reference` until it exits; returns the radius
/// and the highest level reached by the projected path.
pub fn exit_radius<W: WalkProvider>(
    walks: &W,
    e: &Emission,
    reference: &Aggregate,
    step_budget: u64,
) -> Result<(u32, u32), EngineError> {
    let z = e.source.site();
    let mut walk = walks.walk(e.source, e.index, 0);
    let mut pos = z;
    let mut radius = 0u32;
    let mut level = e.source.level();
    let mut steps = 0u64;
    while reference.contains(&pos) {
        if steps >= step_budget {
            return Err(EngineError::StepBudgetExceeded {
                origin: e.source,
                index: e.index,
                budget: step_budget,
            });
        }
        let d = walk.next_step();
        pos = pos.step(d)?;
        steps += 1;
        if d.axis() != 0 {
            radius = radius.max(pos.hyperplane_distance(&z) as u32);
            level = level.max(pos.hyperplane_norm());
        }
    }
    Ok((radius, level))
}

/// Records for every top in `[0, epsilon]` of every source of `region`,
/// walked against a frozen reference aggregate.
pub fn radii_against(
    seed: u64,
    reference: &Aggregate,
    region: &[Source],
    epsilon: f64,
    trust_level: Option<u32>,
    step_budget: u64,
) -> Result<Vec<RadiusRecord>, EngineError> {
    let walks = StreamWalks { seed };
    let per_source: Vec<Result<Vec<RadiusRecord>, EngineError>> = region
        .par_iter()
        .map(|z| {
            let tops = clock_tops(&StreamKey::clock(seed, *z), epsilon);
            tops.times
                .iter()
                .enumerate()
                .map(|(j, t)| {
                    let start = Emission {
                        source: *z,
                        time: *t,
                        index: j as u32 + 1,
                    };
                    let (radius, level) = exit_radius(&walks, &start, reference, step_budget)?;
                    Ok(RadiusRecord {
                        start,
                        radius,
                        trusted: trust_level.is_none_or(|l| level <= l),
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per_source {
        out.extend(r?);
    }
    Ok(out)
}

/// `R((z,t),T)` for the tops of `region` in `[0, epsilon]`, against
/// `A_T[M_ref]` as a proxy for the infinite aggregate. Walks whose
/// projection climbs above level `M_ref / 2` are flagged untrusted.
pub fn radii_table(
    seed: u64,
    dim: usize,
    region: &[Source],
    epsilon: f64,
    horizon: f64,
    m_ref: u32,
    step_budget: u64,
) -> Result<RadiiTable, EngineError> {
    let mut cfg = SimConfig::new(dim, m_ref, horizon, seed);
    cfg.step_budget = step_budget;
    let reference = build_aggregate(&cfg)?;
    let trust_level = Some(m_ref / 2);
    Ok(RadiiTable {
        reference: Reference::Window {
            radius: m_ref,
            horizon,
        },
        epsilon,
        trust_level,
        records: radii_against(seed, &reference, region, epsilon, trust_level, step_budget)?,
    })
}

/// `R_T(z; ε)`: per-source maximum over records.
pub fn per_source_radii(records: &[RadiusRecord]) -> BTreeMap<Source, u32> {
    let mut m = BTreeMap::new();
    for r in records {
        let e = m.entry(r.start.source).or_insert(0u32);
        *e = (*e).max(r.radius);
    }
    m
}

/// `R^loc`: radii of the sources of `χ_ε ∩ B(x, 10M)` against the aggregate
/// `A_T[B(x, 20M)]` grown from the sources of `B(x, 20M)` only.
pub fn localized_radii(
    x: Source,
    m: u32,
    seed: u64,
    epsilon: f64,
    horizon: f64,
    step_budget: u64,
) -> Result<Vec<RadiusRecord>, EngineError> {
    let inner: Vec<Source> = x
        .ball(10 * m)
        .into_iter()
        .filter(|z| !clock_tops(&StreamKey::clock(seed, *z), epsilon).is_empty())
        .collect();
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    let window = Window {
        center: x,
        radius: 20 * m,
    };
    let reference = build_window(seed, &window, horizon, step_budget, false)?.aggregate;
    radii_against(seed, &reference, &inner, epsilon, None, step_budget)
}

/// Discrete Boolean model: hyperplane balls `B(z, r_z)` around the centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BooleanModel {
    pub dim: usize,
    pub centers: Vec<Source>,
    pub radii: Vec<u32>,
    pub epsilon: f64,
    pub horizon: f64,
}

impl BooleanModel {
    pub fn from_balls(dim: usize, balls: &[(Source, u32)]) -> Self {
        BooleanModel {
            dim,
            centers: balls.iter().map(|b| b.0).collect(),
            radii: balls.iter().map(|b| b.1).collect(),
            epsilon: f64::NAN,
            horizon: f64::NAN,
        }
    }

    /// Centres are the sources carrying at least one record, each with its
    /// maximal radius.
    pub fn from_records(dim: usize, records: &[RadiusRecord], epsilon: f64, horizon: f64) -> Self {
        let per = per_source_radii(records);
        BooleanModel {
            dim,
            centers: per.keys().copied().collect(),
            radii: per.values().copied().collect(),
            epsilon,
            horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn overlaps(&self, i: usize, j: usize) -> bool {
        hball_overlap(&self.centers[i], self.radii[i], &self.centers[j], self.radii[j])
    }

    /// Overlapping pairs `(i, j)`, `i < j`.
    pub fn overlap_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        let key = |i: usize| self.centers[i].site().coord(1) as i64;
        order.sort_by_key(|&i| (key(i), i));
        let rmax = self.radii.iter().copied().max().unwrap_or(0) as i64;
        let mut out = Vec::new();
        for (a, &i) in order.iter().enumerate() {
            let reach = key(i) + self.radii[i] as i64 + rmax;
            for &j in &order[a + 1..] {
                if key(j) > reach {
                    break;
                }
                if self.overlaps(i, j) {
                    out.push((i.min(j), i.max(j)));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Degree of every centre in the overlap graph.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.len()];
        for (i, j) in self.overlap_pairs() {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn mean_degree(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        2.0 * self.overlap_pairs().len() as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    /// Indices into the model's centre list, increasing.
    pub members: Vec<usize>,
}

impl Cluster {
    /// Smallest `r` with every ball of the cluster inside `B(anchor, r)`.
    pub fn diameter_from(&self, model: &BooleanModel, anchor: &Source) -> u32 {
        self.members
            .iter()
            .map(|&i| {
                model.centers[i].site().hyperplane_distance(&anchor.site()) as u32 + model.radii[i]
            })
            .max()
            .unwrap_or(0)
    }
}

/// Connected components of the overlap graph, ordered by smallest member.
pub fn clusters(model: &BooleanModel) -> Vec<Cluster> {
    let n = model.len();
    let mut uf = UnionFind::<usize>::new(n);
    for (i, j) in model.overlap_pairs() {
        uf.union(i, j);
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        by_root.entry(uf.find(i)).or_default().push(i);
    }
    let mut out: Vec<Cluster> = by_root.into_values().map(|members| Cluster { members }).collect();
    out.sort_by_key(|c| c.members[0]);
    out
}

/// Diameter of the cluster of the origin, `None` if the origin is not a centre.
pub fn origin_cluster_diameter(model: &BooleanModel) -> Option<u32> {
    let origin = Source::origin(model.dim).ok()?;
    let idx = model.centers.iter().position(|z| *z == origin)?;
    clusters(model)
        .into_iter()
        .find(|c| c.members.contains(&idx))
        .map(|c| c.diameter_from(model, &origin))
}

/// Ball of a starting point, as used by chain searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedBall {
    pub source: Source,
    pub time: f64,
    pub radius: u32,
}

impl From<&RadiusRecord> for TimedBall {
    fn from(r: &RadiusRecord) -> Self {
        TimedBall {
            source: r.start.source,
            time: r.start.time,
            radius: r.radius,
        }
    }
}

/// Checks a descending chain witness: strictly decreasing times, consecutive
/// overlap, first ball meeting `Z_{k0}`, last source at level `>= target`.
pub fn is_descending_chain(balls: &[TimedBall], chain: &[usize], k0: u32, target: u32) -> bool {
    let (Some(&first), Some(&last)) = (chain.first(), chain.last()) else {
        return false;
    };
    if chain.iter().any(|&i| i >= balls.len()) {
        return false;
    }
    let b0 = &balls[first];
    if !hball_meets_strip(&b0.source, b0.radius, k0) || balls[last].source.level() < target {
        return false;
    }
    chain.windows(2).all(|p| {
        let (a, b) = (&balls[p[0]], &balls[p[1]]);
        b.time < a.time && hball_overlap(&a.source, a.radius, &b.source, b.radius)
    })
}

/// A descending chain from `Z_{k0}` out to level `target`, or `None`.
///
/// Dynamic programme over starting points in increasing time: a ball is
/// good when its source reaches the target level or it overlaps an earlier
/// good ball.
pub fn find_descending_chain(balls: &[TimedBall], k0: u32, target: u32) -> Option<Vec<usize>> {
    let n = balls.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| balls[a].time.total_cmp(&balls[b].time).then(a.cmp(&b)));
    // next[v] = Some(u) continues the chain; good[v] = chain from v exists
    let mut good = vec![false; n];
    let mut next: Vec<Option<usize>> = vec![None; n];
    for (k, &v) in order.iter().enumerate() {
        if balls[v].source.level() >= target {
            good[v] = true;
            continue;
        }
        for &u in &order[..k] {
            let (a, b) = (&balls[v], &balls[u]);
            if good[u]
                && b.time < a.time
                && hball_overlap(&a.source, a.radius, &b.source, b.radius)
            {
                good[v] = true;
                next[v] = Some(u);
                break;
            }
        }
    }
    let start = order
        .iter()
        .rev()
        .copied()
        .find(|&v| good[v] && hball_meets_strip(&balls[v].source, balls[v].radius, k0))?;
    let mut chain = vec![start];
    while let Some(u) = next[*chain.last().unwrap()] {
        chain.push(u);
    }
    Some(chain)
}

/// Whether the component of `B(x, m)` in the union of `balls` and `B(x, m)`
/// leaves `B(x, 8m)`.
pub fn component_escapes(x: &Source, m: u32, balls: &[(Source, u32)]) -> bool {
    let mut all = Vec::with_capacity(balls.len() + 1);
    all.push((*x, m));
    all.extend_from_slice(balls);
    let model = BooleanModel::from_balls(x.dim(), &all);
    let comp = clusters(&model)
        .into_iter()
        .find(|c| c.members.contains(&0))
        .expect("seed ball belongs to a cluster");
    comp.diameter_from(&model, x) > 8 * m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GOutcome {
    pub occurs: bool,
    /// Centres of the localized model, `|χ_ε ∩ B(x, 10M)|`.
    pub centers: usize,
}

/// `G_ε(x, M)`: the component of `x` in `Σ_loc(x, M) ∪ B(x, M)` is not
/// included in `B(x, 8M)`.
pub fn event_g(
    x: Source,
    m: u32,
    epsilon: f64,
    horizon: f64,
    seed: u64,
    step_budget: u64,
) -> Result<GOutcome, EngineError> {
    let records = localized_radii(x, m, seed, epsilon, horizon, step_budget)?;
    let model = BooleanModel::from_records(x.dim(), &records, epsilon, horizon);
    let balls: Vec<(Source, u32)> = model.centers.iter().copied().zip(model.radii.iter().copied()).collect();
    Ok(GOutcome {
        occurs: component_escapes(&x, m, &balls),
        centers: balls.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiEstimate {
    pub dim: usize,
    pub epsilon: f64,
    pub m: u32,
    pub horizon: f64,
    pub estimate: Proportion,
}

/// Monte Carlo estimate of `π_ε(M) = P(G_ε(0, M))` over replicate seeds of
/// `master`, with a 95% Wilson interval.
pub fn estimate_pi(
    dim: usize,
    epsilon: f64,
    m: u32,
    horizon: f64,
    trials: u64,
    master: u64,
    step_budget: u64,
) -> Result<PiEstimate, EngineError> {
    let x = Source::origin(dim)?;
    let hits: Vec<Result<bool, EngineError>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            event_g(x, m, epsilon, horizon, replicate_seed(master, i), step_budget)
                .map(|o| o.occurs)
        })
        .collect();
    let mut n_hit = 0u64;
    for h in hits {
        n_hit += h? as u64;
    }
    Ok(PiEstimate {
        dim,
        epsilon,
        m,
        horizon,
        estimate: Proportion::new(n_hit, trials),
    })
}

/// `p_ε = 1 - e^{-ε}`.
pub fn p_epsilon(epsilon: f64) -> f64 {
    -(-epsilon).exp_m1()
}

/// `p_ε · #B(0, 10M)` with `#B(0, 10M) = (20M + 1)^{d-1}`.
pub fn union_bound(dim: usize, epsilon: f64, m: u32) -> f64 {
    p_epsilon(epsilon) * ((20 * m as u64 + 1) as f64).powi(dim as i32 - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnionBoundReport {
    pub bound: f64,
    pub pi_hat: f64,
    pub half_width: f64,
    pub holds: bool,
}

/// `π̂ <= bound + 2 · (CI half-width)`.
pub fn check_union_bound(est: &PiEstimate) -> UnionBoundReport {
    let bound = union_bound(est.dim, est.epsilon, est.m);
    let hw = est.estimate.half_width();
    UnionBoundReport {
        bound,
        pi_hat: est.estimate.p_hat,
        half_width: hw,
        holds: est.estimate.p_hat <= bound + 2.0 * hw,
    }
}

/// `c = |S_10| · |S_80|` for hyperplane spheres in dimension `dim`.
pub fn c_geom(dim: usize) -> u64 {
    hsphere_size(dim, 10) * hsphere_size(dim, 80)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleReport {
    pub verdict: Verdict,
    /// `c · lo(M)^2 + slack`.
    pub rhs_lo: f64,
    /// `c · hi(M)^2 + slack`.
    pub rhs_hi: f64,
    pub lhs_lo: f64,
    pub lhs_hi: f64,
}

/// Checks `π(10M) <= c π(M)^2 + slack` with interval arithmetic: fails when
/// even the lower end of `π(10M)` exceeds the largest right-hand side,
/// passes when its upper end is below the smallest one.
pub fn check_multiscale(at_m: &Proportion, at_10m: &Proportion, c: f64, slack: f64) -> MultiscaleReport {
    let rhs_lo = c * at_m.ci_lo * at_m.ci_lo + slack;
    let rhs_hi = c * at_m.ci_hi * at_m.ci_hi + slack;
    let verdict = if at_10m.ci_lo > rhs_hi {
        Verdict::Fail
    } else if at_10m.ci_hi <= rhs_lo {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    MultiscaleReport {
        verdict,
        rhs_lo,
        rhs_hi,
        lhs_lo: at_10m.ci_lo,
        lhs_hi: at_10m.ci_hi,
    }
}

/// Emission indicators `1{z ∈ χ_ε}` for a list of sources.
pub fn chi_indicators(seed: u64, sources: &[Source], epsilon: f64) -> Vec<bool> {
    sources
        .iter()
        .map(|z| !clock_tops(&StreamKey::clock(seed, *z), epsilon).is_empty())
        .collect()
}
