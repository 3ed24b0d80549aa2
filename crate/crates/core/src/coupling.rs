//! Natural and special couplings between aggregates grown from nested source
//! windows, discrepancy classification and chains of changes.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    schedule_window, Aggregate, EngineError, Emission, Forest, Insertion, StreamWalks,
    WalkProvider, Walker, Window,
};
use crate::lattice::{hball_overlap, Site, Source};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CouplingError {
    #[error("coupling windows must be strictly increasing, got {0:?}")]
    InvalidWindows(Vec<u32>),
    #[error("inclusion violated after event {event}: {site} is in window {small} but not in window {large}")]
    InclusionViolated {
        event: usize,
        small: u32,
        large: u32,
        site: Site,
    },
    #[error("condition (star) violated after event {event} at {site}: {reason}")]
    AuditViolation {
        event: usize,
        site: Site,
        reason: String,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Where one particle settled in one window of a ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSettle {
    pub site: Site,
    pub parent: Option<Site>,
    /// Walk steps taken when this window's aggregate was exited.
    pub steps: u64,
    /// Projected radius of the walk up to that exit.
    pub radius: u32,
}

/// One emission of a ladder replay; `settles[i]` is `None` when the source
/// lies outside window `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderEvent {
    pub emission: Emission,
    pub settles: Vec<Option<WindowSettle>>,
}

/// Aggregates for an increasing list of windows driven by the same clocks
/// and walks.
#[derive(Debug, Clone)]
pub struct CouplingLadder {
    pub seed: u64,
    pub dim: usize,
    pub windows: Vec<u32>,
    pub states: Vec<Aggregate>,
}

impl CouplingLadder {
    pub fn state(&self, window: u32) -> Option<&Aggregate> {
        self.windows
            .iter()
            .position(|w| *w == window)
            .map(|i| &self.states[i])
    }

    pub fn forests(&self) -> Vec<Forest> {
        self.states.iter().map(|a| a.forest()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct NaturalRun {
    pub ladder: CouplingLadder,
    pub log: Vec<LadderEvent>,
    /// Number of (event, window pair) inclusion checks performed.
    pub inclusion_checks: u64,
}

fn check_windows(windows: &[u32]) -> Result<(), CouplingError> {
    if windows.is_empty() || windows.windows(2).any(|p| p[0] >= p[1]) {
        return Err(CouplingError::InvalidWindows(windows.to_vec()));
    }
    Ok(())
}

/// Natural coupling ladder over `windows` (strictly increasing), one
/// schedule pass over the largest window.
pub fn run_natural_ladder(
    seed: u64,
    dim: usize,
    windows: &[u32],
    horizon: f64,
    step_budget: u64,
    audit_every_event: bool,
) -> Result<NaturalRun, CouplingError> {
    check_windows(windows)?;
    let outer = Window::centered(dim, *windows.last().unwrap()).map_err(EngineError::from)?;
    let emissions = schedule_window(seed, &outer, horizon);
    let mut run = natural_ladder_with(
        dim,
        windows,
        &emissions,
        &StreamWalks { seed },
        step_budget,
        audit_every_event,
    )?;
    run.ladder.seed = seed;
    Ok(run)
}

/// Two-window natural coupling `M < M'`.
pub fn run_natural_coupling(
    seed: u64,
    dim: usize,
    m: u32,
    m_prime: u32,
    horizon: f64,
    step_budget: u64,
) -> Result<NaturalRun, CouplingError> {
    run_natural_ladder(seed, dim, &[m, m_prime], horizon, step_budget, true)
}

/// Ladder replay over an explicit emission list and walk provider.
pub fn natural_ladder_with<W: WalkProvider>(
    dim: usize,
    windows: &[u32],
    emissions: &[Emission],
    walks: &W,
    step_budget: u64,
    audit_every_event: bool,
) -> Result<NaturalRun, CouplingError> {
    check_windows(windows)?;
    let mut states: Vec<Aggregate> = windows.iter().map(|_| Aggregate::new(dim)).collect();
    let mut log = Vec::with_capacity(emissions.len());
    let mut checks = 0u64;
    for (ev, e) in emissions.iter().enumerate() {
        let level = e.source.level();
        let first = windows.iter().position(|w| level <= *w);
        let mut settles = vec![None; windows.len()];
        if let Some(first) = first {
            let mut walk = walks.walk(e.source, e.index, 0);
            let mut w = Walker::new(e.source, false);
            for i in first..windows.len() {
                w.run_until_outside(&mut walk, &states[i], step_budget, e)?;
                let s = WindowSettle {
                    site: w.pos,
                    parent: w.prev,
                    steps: w.steps,
                    radius: w.radius,
                };
                states[i].insert(Insertion {
                    site: s.site,
                    emission: *e,
                    parent: s.parent,
                    steps: s.steps,
                });
                settles[i] = Some(s);
            }
        }
        for i in 1..windows.len() {
            checks += 1;
            let violation = if audit_every_event {
                states[i - 1].sites().find(|s| !states[i].contains(s))
            } else {
                settles[i - 1].map(|s| s.site).filter(|s| !states[i].contains(s))
            };
            if let Some(site) = violation {
                return Err(CouplingError::InclusionViolated {
                    event: ev,
                    small: windows[i - 1],
                    large: windows[i],
                    site,
                });
            }
        }
        log.push(LadderEvent {
            emission: *e,
            settles,
        });
    }
    Ok(NaturalRun {
        ladder: CouplingLadder {
            seed: 0,
            dim,
            windows: windows.to_vec(),
            states,
        },
        log,
        inclusion_checks: checks,
    })
}

/// Walk of an annulus particle parked on the discrepancy it created.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Suspended {
    pub emission: Emission,
    pub resume_step: u64,
    pub radius: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecialEvent {
    pub emission: Emission,
    pub small_site: Option<Site>,
    pub large_site: Site,
    /// Particle whose walk was resumed to produce `large_site`.
    pub woke: Option<(Source, u32)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StarAudit {
    pub events_checked: usize,
    pub wakeups: usize,
    pub max_discrepancies: usize,
}

#[derive(Debug, Clone)]
pub struct SpecialRun {
    pub small: Aggregate,
    pub large: Aggregate,
    pub suspended: HashMap<Site, Suspended>,
    pub log: Vec<SpecialEvent>,
    pub audit: StarAudit,
}

pub fn run_special_coupling(
    seed: u64,
    dim: usize,
    m: u32,
    m_prime: u32,
    horizon: f64,
    step_budget: u64,
) -> Result<SpecialRun, CouplingError> {
    check_windows(&[m, m_prime])?;
    let outer = Window::centered(dim, m_prime).map_err(EngineError::from)?;
    let emissions = schedule_window(seed, &outer, horizon);
    special_coupling_with(dim, m, m_prime, &emissions, &StreamWalks { seed }, step_budget)
}

/// Special coupling: an inner particle landing on a discrepancy wakes the
/// annulus particle that created it, whose walk resumes until it leaves the
/// larger aggregate. Condition (star) is audited after every event.
pub fn special_coupling_with<W: WalkProvider>(
    dim: usize,
    m: u32,
    m_prime: u32,
    emissions: &[Emission],
    walks: &W,
    step_budget: u64,
) -> Result<SpecialRun, CouplingError> {
    check_windows(&[m, m_prime])?;
    let mut small = Aggregate::new(dim);
    let mut large = Aggregate::new(dim);
    let mut suspended: HashMap<Site, Suspended> = HashMap::new();
    let mut log = Vec::with_capacity(emissions.len());
    let mut audit = StarAudit::default();
    for (ev, e) in emissions.iter().enumerate() {
        let level = e.source.level();
        if level > m_prime {
            continue;
        }
        let mut walk = walks.walk(e.source, e.index, 0);
        let mut w = Walker::new(e.source, false);
        let event = if level > m {
            w.run_until_outside(&mut walk, &large, step_budget, e)?;
            large.insert(Insertion {
                site: w.pos,
                emission: *e,
                parent: w.prev,
                steps: w.steps,
            });
            suspended.insert(
                w.pos,
                Suspended {
                    emission: *e,
                    resume_step: w.steps,
                    radius: w.radius,
                },
            );
            SpecialEvent {
                emission: *e,
                small_site: None,
                large_site: w.pos,
                woke: None,
            }
        } else {
            w.run_until_outside(&mut walk, &small, step_budget, e)?;
            let x = w.pos;
            small.insert(Insertion {
                site: x,
                emission: *e,
                parent: w.prev,
                steps: w.steps,
            });
            if !large.contains(&x) {
                large.insert(Insertion {
                    site: x,
                    emission: *e,
                    parent: w.prev,
                    steps: w.steps,
                });
                SpecialEvent {
                    emission: *e,
                    small_site: Some(x),
                    large_site: x,
                    woke: None,
                }
            } else {
                let sus = suspended.remove(&x).ok_or_else(|| CouplingError::AuditViolation {
                    event: ev,
                    site: x,
                    reason: "discrepancy without a suspended walk".into(),
                })?;
                let z = sus.emission.source;
                let mut rwalk = walks.walk(z, sus.emission.index, sus.resume_step);
                let mut rw = Walker::resumed(z, x, sus.resume_step, sus.radius);
                rw.run_until_outside(&mut rwalk, &large, step_budget, &sus.emission)?;
                let y = rw.pos;
                large.insert(Insertion {
                    site: y,
                    emission: sus.emission,
                    parent: rw.prev,
                    steps: rw.steps,
                });
                suspended.insert(
                    y,
                    Suspended {
                        emission: sus.emission,
                        resume_step: rw.steps,
                        radius: rw.radius,
                    },
                );
                audit.wakeups += 1;
                SpecialEvent {
                    emission: *e,
                    small_site: Some(x),
                    large_site: y,
                    woke: Some(sus.emission.id()),
                }
            }
        };
        audit_star(ev, m, &small, &large, &suspended)?;
        audit.events_checked += 1;
        audit.max_discrepancies = audit.max_discrepancies.max(suspended.len());
        log.push(event);
    }
    Ok(SpecialRun {
        small,
        large,
        suspended,
        log,
        audit,
    })
}

/// Full check of inclusion and (star): every site of `large \ small` carries
/// a suspended walk of an annulus particle, and nothing else does.
fn audit_star(
    event: usize,
    m: u32,
    small: &Aggregate,
    large: &Aggregate,
    suspended: &HashMap<Site, Suspended>,
) -> Result<(), CouplingError> {
    let violation = |site: Site, reason: &str| CouplingError::AuditViolation {
        event,
        site,
        reason: reason.to_string(),
    };
    if let Some(s) = small.sites().find(|s| !large.contains(s)) {
        return Err(violation(s, "smaller aggregate not included"));
    }
    let mut discrepancies = 0usize;
    for ins in large.insertions() {
        if small.contains(&ins.site) {
            continue;
        }
        discrepancies += 1;
        let sus = suspended
            .get(&ins.site)
            .ok_or_else(|| violation(ins.site, "discrepancy without a suspended walk"))?;
        if sus.emission.source.level() <= m || ins.emission.source.level() <= m {
            return Err(violation(ins.site, "discrepancy produced by an inner particle"));
        }
    }
    if discrepancies != suspended.len() {
        let stray = suspended
            .keys()
            .find(|s| small.contains(s) || !large.contains(s))
            .copied()
            .unwrap_or_else(|| Site::origin(small.dim()).expect("valid dimension"));
        return Err(violation(stray, "suspended walk on a non-discrepancy"));
    }
    Ok(())
}

/// Colour classes of a pair of nested aggregates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    /// Sites of the larger aggregate only.
    pub red: BTreeSet<Site>,
    /// Common sites whose creating emission or entry edge differ.
    pub blue: BTreeSet<Site>,
    /// Common sites reached by different particles.
    pub blue_emission: BTreeSet<Site>,
    /// Common sites reached through different entry edges.
    pub blue_edge: BTreeSet<Site>,
    /// Edges `(parent, child)` present in both forests.
    pub green_edges: BTreeSet<(Site, Site)>,
}

pub fn classify_discrepancies(
    small: &Aggregate,
    large: &Aggregate,
) -> Result<DiscrepancyReport, CouplingError> {
    let mut r = DiscrepancyReport::default();
    for ins in small.insertions() {
        let other = large
            .insertion(&ins.site)
            .ok_or(CouplingError::InclusionViolated {
                event: small.len(),
                small: 0,
                large: 0,
                site: ins.site,
            })?;
        let diff_emission = other.emission.id() != ins.emission.id();
        let diff_edge = other.parent != ins.parent;
        if diff_emission {
            r.blue_emission.insert(ins.site);
        }
        if diff_edge {
            r.blue_edge.insert(ins.site);
        } else if let Some(p) = ins.parent {
            r.green_edges.insert((p, ins.site));
        }
        if diff_emission || diff_edge {
            r.blue.insert(ins.site);
        }
    }
    for s in large.sites() {
        if !small.contains(&s) {
            r.red.insert(s);
        }
    }
    Ok(r)
}

/// One relay of a chain: the particle visiting the current discrepancy
/// (absent for the initiator) and the new discrepancy it creates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relay {
    pub emission: Emission,
    pub visited: Option<Site>,
    pub created: Site,
    /// Projected radius of the walk until it left the larger aggregate.
    pub radius: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOfChanges {
    pub relays: Vec<Relay>,
    pub origin_level: u32,
}

impl ChainOfChanges {
    pub fn len(&self) -> usize {
        self.relays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relays.is_empty()
    }

    /// Current discrepancy carried by the chain.
    pub fn head(&self) -> Site {
        self.relays.last().expect("chains are never empty").created
    }

    pub fn reaches_strip(&self, k: u32) -> bool {
        self.relays.iter().any(|r| r.created.in_strip(k))
    }

    /// Strict time increase and consecutive ball overlap.
    pub fn validate(&self) -> Result<(), String> {
        for p in self.relays.windows(2) {
            let (a, b) = (&p[0], &p[1]);
            if a.emission.time.total_cmp(&b.emission.time).is_ge() {
                return Err(format!("times {} and {} not increasing", a.emission.time, b.emission.time));
            }
            if b.visited != Some(a.created) {
                return Err(format!("relay does not visit discrepancy {}", a.created));
            }
            if !hball_overlap(&a.emission.source, a.radius, &b.emission.source, b.radius) {
                return Err(format!(
                    "balls around {} and {} do not overlap",
                    a.emission.source, b.emission.source
                ));
            }
        }
        Ok(())
    }
}

/// Chains of changes between ladder windows `small` and `large` (indices
/// into the ladder's window list), in order of initiation.
pub fn extract_chains(log: &[LadderEvent], small: usize, large: usize) -> Vec<ChainOfChanges> {
    let mut chains: Vec<ChainOfChanges> = Vec::new();
    let mut owner: HashMap<Site, usize> = HashMap::new();
    for ev in log {
        let Some(ls) = ev.settles.get(large).copied().flatten() else {
            continue;
        };
        match ev.settles.get(small).copied().flatten() {
            None => {
                owner.insert(ls.site, chains.len());
                chains.push(ChainOfChanges {
                    relays: vec![Relay {
                        emission: ev.emission,
                        visited: None,
                        created: ls.site,
                        radius: ls.radius,
                    }],
                    origin_level: ev.emission.source.level(),
                });
            }
            Some(s) if s.site != ls.site => {
                if let Some(c) = owner.remove(&s.site) {
                    chains[c].relays.push(Relay {
                        emission: ev.emission,
                        visited: Some(s.site),
                        created: ls.site,
                        radius: ls.radius,
                    });
                    owner.insert(ls.site, c);
                }
            }
            Some(_) => {}
        }
    }
    chains
}

/// Vertices inside `Z_K` where two forests differ: present in only one, or
/// present in both with different parent edges.
pub fn forest_window_diff(f1: &Forest, f2: &Forest, k: u32) -> BTreeSet<Site> {
    let mut out = BTreeSet::new();
    for v in f1.vertices.iter().chain(f2.vertices.iter()) {
        if !v.in_strip(k) {
            continue;
        }
        if f1.vertices.contains(v) != f2.vertices.contains(v) {
            out.insert(*v);
            continue;
        }
        let e1 = f1.parent.get(v).filter(|p| p.in_strip(k));
        let e2 = f2.parent.get(v).filter(|p| p.in_strip(k));
        if e1 != e2 {
            out.insert(*v);
        }
    }
    out
}

/// Vertex sets and parent edges (both endpoints inside `Z_K`) coincide.
pub fn forest_window_equal(f1: &Forest, f2: &Forest, k: u32) -> bool {
    forest_window_diff(f1, f2, k).is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ScriptedWalks;
    use crate::lattice::Direction;

    fn src(c: &[i32]) -> Source {
        Source::from_hyperplane(c).unwrap()
    }

    fn site(c: &[i32]) -> Site {
        Site::new(c).unwrap()
    }

    fn em(z: Source, t: f64, j: u32) -> Emission {
        Emission {
            source: z,
            time: t,
            index: j,
        }
    }

    const B: u64 = 1000;

    /// Two windows `0 < 1` in d=2: the inner source `z = (0,0)` and the
    /// annulus source `z' = (0,1)`. The third particle (from `z`) lands on
    /// the discrepancy created by `z'`.
    fn fig4() -> (Vec<Emission>, ScriptedWalks) {
        let z = src(&[0]);
        let zp = src(&[1]);
        let e = vec![em(z, 1.0, 1), em(zp, 2.0, 1), em(z, 3.0, 2)];
        let walks = ScriptedWalks::new()
            .with(zp, 1, vec![Direction::plus(0)])
            .with(z, 2, vec![Direction::plus(1), Direction::minus(0), Direction::minus(0)]);
        (e, walks)
    }

    #[test]
    fn no_emissions_leave_both_empty() {
        let run = natural_ladder_with(2, &[1, 3], &[], &ScriptedWalks::new(), B, true).unwrap();
        assert!(run.ladder.states.iter().all(|a| a.is_empty()));
        assert!(extract_chains(&run.log, 0, 1).is_empty());
    }

    #[test]
    fn annulus_emission_only_feeds_the_larger_window() {
        let zp = src(&[2]);
        let run =
            natural_ladder_with(2, &[1, 3], &[em(zp, 0.5, 1)], &ScriptedWalks::new(), B, true)
                .unwrap();
        assert!(run.ladder.states[0].is_empty());
        assert_eq!(run.ladder.states[1].len(), 1);
        assert_eq!(run.log[0].settles[0], None);
    }

    #[test]
    fn windows_must_increase() {
        let err = natural_ladder_with(2, &[3, 3], &[], &ScriptedWalks::new(), B, true);
        assert!(matches!(err, Err(CouplingError::InvalidWindows(_))));
    }

    #[test]
    fn fig4_special_coupling() {
        let (e, walks) = fig4();
        let run = special_coupling_with(2, 0, 1, &e, &walks, B).unwrap();
        // x = (0,1) joins the smaller aggregate, the resumed walk of z'
        // steps +e1 from x and adds y = (1,1)
        assert_eq!(run.small.site_set(), [site(&[0, 0]), site(&[0, 1])].into());
        assert_eq!(
            run.large.site_set(),
            [site(&[0, 0]), site(&[0, 1]), site(&[1, 1])].into()
        );
        let y = run.large.insertion(&site(&[1, 1])).unwrap();
        assert_eq!(y.emission.source, src(&[1]));
        assert_eq!(y.parent, Some(site(&[0, 1])));
        assert_eq!(run.log[2].woke, Some((src(&[1]), 1)));
        assert_eq!(run.audit.wakeups, 1);

        let rep = classify_discrepancies(&run.small, &run.large).unwrap();
        assert_eq!(rep.red, [site(&[1, 1])].into());
        // x: root of z' in the larger forest, child of (0,0) in the smaller
        assert!(rep.blue_edge.contains(&site(&[0, 1])));
        assert!(rep.blue_emission.contains(&site(&[0, 1])));
        assert!(!rep.blue.contains(&site(&[0, 0])));
    }

    #[test]
    fn fig4_natural_coupling_continues_with_own_walk() {
        let (e, walks) = fig4();
        let run = natural_ladder_with(2, &[0, 1], &e, &walks, B, true).unwrap();
        // S_z continues from x: -e1 leaves the larger aggregate at (-1,1)
        let large = &run.ladder.states[1];
        assert!(large.contains(&site(&[-1, 1])));
        assert!(!large.contains(&site(&[1, 1])));
        let ev = &run.log[2];
        assert_eq!(ev.settles[0].unwrap().site, site(&[0, 1]));
        assert_eq!(ev.settles[1].unwrap().site, site(&[-1, 1]));
        assert_eq!(ev.settles[1].unwrap().parent, Some(site(&[0, 1])));

        let special = special_coupling_with(2, 0, 1, &e, &walks, B).unwrap();
        assert_eq!(special.small, run.ladder.states[0]);

        let chains = extract_chains(&run.log, 0, 1);
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].len(), 2);
        assert_eq!(chains[0].head(), site(&[-1, 1]));
        chains[0].validate().unwrap();
    }

    #[test]
    fn two_relay_chain() {
        // x1 = (0,2) is a root of the annulus source; the fourth particle
        // reaches it through (0,1) and relays it to x2 = (1,2)
        let z0 = src(&[0]);
        let z2 = src(&[2]);
        let e = vec![
            em(z0, 1.0, 1),
            em(z2, 2.0, 1),
            em(z0, 3.0, 2),
            em(z0, 4.0, 3),
        ];
        let up = Direction::plus(1);
        let walks = ScriptedWalks::new()
            // (0,0) -> (0,1): fresh in both
            .with(z0, 2, vec![up])
            // (0,0) -> (0,1) -> (0,2) = x1 (annulus discrepancy) -> (1,2)
            .with(z0, 3, vec![up, up, Direction::plus(0)]);
        let run = natural_ladder_with(2, &[1, 2], &e, &walks, B, true).unwrap();
        // second particle from (0,2) is a root at x1 = (0,2)
        assert_eq!(run.log[1].settles[1].unwrap().site, site(&[0, 2]));
        let chains = extract_chains(&run.log, 0, 1);
        assert_eq!(chains.len(), 1);
        let c = &chains[0];
        assert_eq!(c.len(), 2);
        assert!(c.relays[0].emission.time < c.relays[1].emission.time);
        assert_eq!(c.relays[1].visited, Some(site(&[0, 2])));
        assert_eq!(c.head(), site(&[1, 2]));
        assert_eq!(c.origin_level, 2);
        c.validate().unwrap();
    }

    #[test]
    fn identical_states_have_no_discrepancies() {
        let run = crate::engine::build_aggregate_forest(&crate::engine::SimConfig::new(
            2, 2, 2.0, 5,
        ))
        .unwrap();
        let rep = classify_discrepancies(&run.aggregate, &run.aggregate).unwrap();
        assert!(rep.red.is_empty() && rep.blue.is_empty());
        assert_eq!(rep.green_edges.len(), run.forest.parent.len());
    }

    #[test]
    fn window_equality_ignores_far_vertices() {
        let mut a = Aggregate::new(2);
        let z = src(&[0]);
        a.insert(Insertion {
            site: site(&[0, 0]),
            emission: em(z, 1.0, 1),
            parent: None,
            steps: 0,
        });
        let mut b = a.clone();
        b.insert(Insertion {
            site: site(&[0, 3]),
            emission: em(src(&[3]), 2.0, 1),
            parent: None,
            steps: 0,
        });
        let (fa, fb) = (a.forest(), b.forest());
        assert!(forest_window_equal(&fa, &fa, 0));
        assert!(forest_window_equal(&fa, &fb, 2));
        assert!(!forest_window_equal(&fa, &fb, 3));
    }

    #[test]
    fn random_runs_conserve_discrepancies() {
        for seed in 0..10u64 {
            let run = run_natural_coupling(seed, 2, 2, 4, 4.0, B * 1000).unwrap();
            let rep = classify_discrepancies(&run.ladder.states[0], &run.ladder.states[1])
                .unwrap();
            let annulus = run.log.iter().filter(|e| e.settles[0].is_none()).count();
            assert_eq!(rep.red.len(), annulus);
            let chains = extract_chains(&run.log, 0, 1);
            assert_eq!(chains.len(), annulus);
            let heads: BTreeSet<Site> = chains.iter().map(|c| c.head()).collect();
            assert_eq!(heads, rep.red);
            for c in &chains {
                c.validate().unwrap();
            }
        }
    }
}
