use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::occupancy::Occupancy;
use crate::lattice::{Site, Source};

/// The `index`-th particle emitted by `source`, at the `index`-th top of its clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub source: Source,
    pub time: f64,
    pub index: u32,
}

impl Emission {
    /// Identity of the particle, independent of its time stamp.
    pub fn id(&self) -> (Source, u32) {
        (self.source, self.index)
    }

    /// Total emission order: time, then source, then index.
    pub fn order(&self, other: &Emission) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.source.cmp(&other.source))
            .then_with(|| self.index.cmp(&other.index))
    }
}

/// One settled particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Insertion {
    pub site: Site,
    pub emission: Emission,
    /// Last occupied site visited before settling; `None` for a root.
    pub parent: Option<Site>,
    pub steps: u64,
}

/// Occupied sites together with their insertion history.
#[derive(Debug, Clone)]
pub struct Aggregate {
    dim: usize,
    occ: Occupancy,
    order: Vec<Insertion>,
}

impl PartialEq for Aggregate {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.order == other.order
    }
}

impl Aggregate {
    pub fn new(dim: usize) -> Self {
        Aggregate {
            dim,
            occ: Occupancy::new(dim),
            order: Vec::new(),
        }
    }

    pub fn from_insertions(dim: usize, list: impl IntoIterator<Item = Insertion>) -> Self {
        let mut a = Aggregate::new(dim);
        for ins in list {
            assert!(a.insert(ins), "duplicate site {} in insertion list", ins.site);
        }
        a
    }

    /// Like [`Aggregate::from_insertions`]; `None` on a repeated site.
    pub fn try_from_insertions(dim: usize, list: impl IntoIterator<Item = Insertion>) -> Option<Self> {
        let mut a = Aggregate::new(dim);
        for ins in list {
            if !a.insert(ins) {
                return None;
            }
        }
        Some(a)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    #[inline]
    pub fn contains(&self, s: &Site) -> bool {
        self.occ.contains(s)
    }

    /// Adds a site; returns `false` (and changes nothing) if it is occupied.
    pub fn insert(&mut self, ins: Insertion) -> bool {
        if self.occ.contains(&ins.site) {
            return false;
        }
        self.occ.set(&ins.site, self.order.len() as u32);
        self.order.push(ins);
        true
    }

    pub fn insertion(&self, s: &Site) -> Option<&Insertion> {
        self.occ.get(s).map(|i| &self.order[i as usize])
    }

    /// Position of `s` in the insertion order.
    pub fn insertion_index(&self, s: &Site) -> Option<usize> {
        self.occ.get(s).map(|i| i as usize)
    }

    /// Insertions in insertion order.
    pub fn insertions(&self) -> &[Insertion] {
        &self.order
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.order.iter().map(|i| i.site)
    }

    pub fn site_set(&self) -> BTreeSet<Site> {
        self.sites().collect()
    }

    /// Occupied sites inside the strip `Z_K`.
    pub fn strip_sites(&self, k: u32) -> BTreeSet<Site> {
        self.sites().filter(|s| s.in_strip(k)).collect()
    }

    pub fn is_subset_of(&self, other: &Aggregate) -> bool {
        self.order.iter().all(|i| other.contains(&i.site))
    }

    pub fn forest(&self) -> Forest {
        Forest::from_aggregate(self)
    }
}

/// Parent-edge structure of an aggregate: every settled site except roots
/// carries the edge `(x', x)` through which its particle arrived.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Forest {
    pub vertices: BTreeSet<Site>,
    /// child -> parent
    pub parent: BTreeMap<Site, Site>,
    pub roots: BTreeSet<Site>,
}

impl Forest {
    pub fn from_aggregate(a: &Aggregate) -> Self {
        let mut f = Forest::default();
        for ins in a.insertions() {
            f.vertices.insert(ins.site);
            match ins.parent {
                Some(p) => {
                    f.parent.insert(ins.site, p);
                }
                None => {
                    f.roots.insert(ins.site);
                }
            }
        }
        f
    }

    /// Edges as ordered pairs `(parent, child)`.
    pub fn edges(&self) -> impl Iterator<Item = (Site, Site)> + '_ {
        self.parent.iter().map(|(c, p)| (*p, *c))
    }

    pub fn parent_edge(&self, s: &Site) -> Option<(Site, Site)> {
        self.parent.get(s).map(|p| (*p, *s))
    }

    /// Root of the tree containing `s`.
    pub fn root_of(&self, s: &Site) -> Option<Site> {
        if !self.vertices.contains(s) {
            return None;
        }
        let mut cur = *s;
        let mut hops = 0usize;
        while let Some(p) = self.parent.get(&cur) {
            cur = *p;
            hops += 1;
            if hops > self.vertices.len() {
                return None;
            }
        }
        Some(cur)
    }

    /// Checks the structural invariants: parents are occupied lattice
    /// neighbours, no cycles, roots lie on `H` and have no parent.
    pub fn validate(&self) -> Result<(), String> {
        for (c, p) in &self.parent {
            if !self.vertices.contains(c) || !self.vertices.contains(p) {
                return Err(format!("edge ({}, {}) leaves the vertex set", p, c));
            }
            if !c.is_neighbor(p) {
                return Err(format!("edge ({}, {}) is not a lattice edge", p, c));
            }
        }
        for r in &self.roots {
            if r.coord(0) != 0 {
                return Err(format!("root {} is not on the hyperplane", r));
            }
            if self.parent.contains_key(r) {
                return Err(format!("root {} has a parent", r));
            }
        }
        if self.roots.len() + self.parent.len() != self.vertices.len() {
            return Err("vertex count differs from roots + edges".into());
        }
        for v in &self.vertices {
            match self.root_of(v) {
                Some(r) if self.roots.contains(&r) => {}
                _ => return Err(format!("vertex {} does not reach a root", v)),
            }
        }
        Ok(())
    }
}

/// Full or summarised trajectory of one particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleTrace {
    pub emission: Emission,
    /// Visited sites from the source to the settle site, when recorded.
    pub path: Option<Vec<Site>>,
    pub settle_site: Site,
    pub entry_edge: Option<(Site, Site)>,
    pub steps: u64,
    /// Smallest `r` such that `B(source, r)` holds every projected path site.
    pub radius: u32,
}
