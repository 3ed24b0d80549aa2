//! Versioned binary snapshots of a built aggregate and its forest.
//!
//! Layout (all integers little-endian, byte-exact; see `docs/snapshot.md`):
//!
//! ```text
//! magic    8 bytes  "IDLASNAP"
//! version  u32
//! sections repeated: tag [u8; 4], length u64, payload
//!   HEAD  dim u8, mode u8, window u32, horizon f64, seed u64, step_budget u64
//!   SITE  count varint, then per site d zigzag varints (delta to previous site)
//!   EDGE  per site varint: 0 for a root, else 1 + insertion index of the parent
//!   EMIT  per site: d-1 zigzag varints (source), varint index, f64 time, varint steps
//!   DGST  32-byte SHA-256 trace digest over the EMIT payload
//! checksum 8 bytes  first 8 bytes of SHA-256 of everything before
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{
    build_aggregate, build_ordered_aggregate, Aggregate, Emission, EngineError, Insertion,
    SimConfig, DEFAULT_STEP_BUDGET,
};
use crate::lattice::{check_dim, Site, Source, MAX_DIM};

pub const MAGIC: &[u8; 8] = b"IDLASNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("checksum mismatch: the snapshot is truncated or corrupted")]
    ChecksumMismatch,
    #[error("malformed snapshot: {0}")]
    Malformed(String),
    #[error("replay differs from the snapshot: {0}")]
    ReplayMismatch(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Particle order of the build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuildMode {
    TimeOrdered,
    LevelOrdered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub mode: BuildMode,
    pub window: u32,
    pub horizon: f64,
    pub seed: u64,
    pub step_budget: u64,
}

impl SnapshotHeader {
    pub fn sim_config(&self) -> SimConfig {
        let mut c = SimConfig::new(self.dim, self.window, self.horizon, self.seed);
        c.step_budget = self.step_budget;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub aggregate: Aggregate,
}

impl Snapshot {
    /// Builds the aggregate described by `header`.
    pub fn build(header: SnapshotHeader) -> Result<Self, SnapshotError> {
        let cfg = header.sim_config();
        let aggregate = match header.mode {
            BuildMode::TimeOrdered => build_aggregate(&cfg)?,
            BuildMode::LevelOrdered => build_ordered_aggregate(&cfg)?,
        };
        Ok(Snapshot { header, aggregate })
    }

    pub fn empty(dim: usize) -> Self {
        Snapshot {
            header: SnapshotHeader {
                dim,
                mode: BuildMode::TimeOrdered,
                window: 0,
                horizon: 0.0,
                seed: 0,
                step_budget: DEFAULT_STEP_BUDGET,
            },
            aggregate: Aggregate::new(dim),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let ins = self.aggregate.insertions();
        let d = h.dim;

        let mut head = Vec::new();
        head.push(d as u8);
        head.push(match h.mode {
            BuildMode::TimeOrdered => 0,
            BuildMode::LevelOrdered => 1,
        });
        head.extend_from_slice(&h.window.to_le_bytes());
        head.extend_from_slice(&h.horizon.to_le_bytes());
        head.extend_from_slice(&h.seed.to_le_bytes());
        head.extend_from_slice(&h.step_budget.to_le_bytes());

        let mut sites = Vec::new();
        put_varint(&mut sites, ins.len() as u64);
        let mut prev = [0i64; MAX_DIM];
        for i in ins {
            for (a, p) in prev.iter_mut().enumerate().take(d) {
                let c = i.site.coord(a) as i64;
                put_varint(&mut sites, zigzag(c - *p));
                *p = c;
            }
        }

        let mut edges = Vec::new();
        for i in ins {
            let v = match i.parent {
                None => 0,
                Some(p) => {
                    let idx = self
                        .aggregate
                        .insertion_index(&p)
                        .expect("parent is an occupied site");
                    idx as u64 + 1
                }
            };
            put_varint(&mut edges, v);
        }

        let mut emits = Vec::new();
        for i in ins {
            for a in 1..d {
                put_varint(&mut emits, zigzag(i.emission.source.site().coord(a) as i64));
            }
            put_varint(&mut emits, i.emission.index as u64);
            emits.extend_from_slice(&i.emission.time.to_le_bytes());
            put_varint(&mut emits, i.steps);
        }
        let digest = Sha256::digest(&emits);

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        for (tag, payload) in [
            (b"HEAD", &head[..]),
            (b"SITE", &sites[..]),
            (b"EDGE", &edges[..]),
            (b"EMIT", &emits[..]),
            (b"DGST", &digest[..]),
        ] {
            out.extend_from_slice(tag);
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        }
        let sum = Sha256::digest(&out);
        out.extend_from_slice(&sum[..8]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        if bytes.len() < MAGIC.len() + 4 + 8 || &bytes[..8] != MAGIC {
            return Err(SnapshotError::ChecksumMismatch);
        }
        let (body, sum) = bytes.split_at(bytes.len() - 8);
        if Sha256::digest(body)[..8] != *sum {
            return Err(SnapshotError::ChecksumMismatch);
        }
        let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
        if version != SNAPSHOT_VERSION {
            return Err(SnapshotError::SchemaVersionMismatch {
                found: version,
                expected: SNAPSHOT_VERSION,
            });
        }
        let mut r = Reader { buf: body, pos: 12 };
        let head = r.section(b"HEAD")?;
        let sites = r.section(b"SITE")?;
        let edges = r.section(b"EDGE")?;
        let emits = r.section(b"EMIT")?;
        let digest = r.section(b"DGST")?;
        if r.pos != body.len() {
            return Err(SnapshotError::Malformed("trailing bytes after sections".into()));
        }
        if Sha256::digest(emits)[..] != *digest {
            return Err(SnapshotError::Malformed("trace digest does not match".into()));
        }

        let mut h = Reader { buf: head, pos: 0 };
        let dim = h.u8()? as usize;
        check_dim(dim).map_err(|e| SnapshotError::Malformed(e.to_string()))?;
        let mode = match h.u8()? {
            0 => BuildMode::TimeOrdered,
            1 => BuildMode::LevelOrdered,
            m => return Err(SnapshotError::Malformed(format!("unknown mode {m}"))),
        };
        let header = SnapshotHeader {
            dim,
            mode,
            window: u32::from_le_bytes(h.take(4)?.try_into().unwrap()),
            horizon: f64::from_le_bytes(h.take(8)?.try_into().unwrap()),
            seed: u64::from_le_bytes(h.take(8)?.try_into().unwrap()),
            step_budget: u64::from_le_bytes(h.take(8)?.try_into().unwrap()),
        };

        let mut s = Reader { buf: sites, pos: 0 };
        let count = s.varint()? as usize;
        let mut site_list = Vec::with_capacity(count.min(1 << 24));
        let mut prev = [0i64; MAX_DIM];
        for _ in 0..count {
            let mut c = [0i32; MAX_DIM];
            for a in 0..dim {
                prev[a] += unzigzag(s.varint()?);
                c[a] = i32::try_from(prev[a])
                    .map_err(|_| SnapshotError::Malformed("coordinate out of range".into()))?;
            }
            site_list.push(Site::new(&c[..dim]).map_err(|e| SnapshotError::Malformed(e.to_string()))?);
        }
        let mut e = Reader { buf: edges, pos: 0 };
        let mut m = Reader { buf: emits, pos: 0 };
        let mut list = Vec::with_capacity(count.min(1 << 24));
        for (k, site) in site_list.iter().enumerate() {
            let parent = match e.varint()? {
                0 => None,
                p if (p as usize) <= k => Some(site_list[p as usize - 1]),
                _ => return Err(SnapshotError::Malformed("parent index out of order".into())),
            };
            let mut hc = [0i32; MAX_DIM - 1];
            for c in hc.iter_mut().take(dim - 1) {
                *c = i32::try_from(unzigzag(m.varint()?))
                    .map_err(|_| SnapshotError::Malformed("source out of range".into()))?;
            }
            let source = Source::from_hyperplane(&hc[..dim - 1])
                .map_err(|e| SnapshotError::Malformed(e.to_string()))?;
            let index = u32::try_from(m.varint()?)
                .map_err(|_| SnapshotError::Malformed("particle index out of range".into()))?;
            let time = f64::from_le_bytes(m.take(8)?.try_into().unwrap());
            let steps = m.varint()?;
            list.push(Insertion {
                site: *site,
                emission: Emission { source, time, index },
                parent,
                steps,
            });
        }
        if h.pos != head.len() || s.pos != sites.len() || e.pos != edges.len() || m.pos != emits.len() {
            return Err(SnapshotError::Malformed("section has trailing bytes".into()));
        }
        Ok(Snapshot {
            header,
            aggregate: Aggregate::try_from_insertions(dim, list)
                .ok_or_else(|| SnapshotError::Malformed("repeated site".into()))?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Replays the build under the stored header and compares bit-exactly.
    pub fn verify_replay(&self) -> Result<(), SnapshotError> {
        let fresh = Snapshot::build(self.header)?;
        if fresh.to_bytes() == self.to_bytes() {
            return Ok(());
        }
        let a = self.aggregate.insertions();
        let b = fresh.aggregate.insertions();
        let at = a.iter().zip(b).position(|(x, y)| x != y).unwrap_or(a.len().min(b.len()));
        Err(SnapshotError::ReplayMismatch(format!(
            "first difference at insertion {at} ({} stored, {} replayed)",
            a.len(),
            b.len()
        )))
    }
}

pub fn save_snapshot(s: &Snapshot, path: &Path) -> Result<(), SnapshotError> {
    s.save(path)
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot, SnapshotError> {
    Snapshot::load(path)
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| SnapshotError::Malformed("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }

    fn varint(&mut self) -> Result<u64, SnapshotError> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.u8()?;
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(SnapshotError::Malformed("varint too long".into()))
    }

    fn section(&mut self, tag: &[u8; 4]) -> Result<&'a [u8], SnapshotError> {
        if self.take(4)? != tag {
            return Err(SnapshotError::Malformed(format!(
                "expected section {}",
                String::from_utf8_lossy(tag)
            )));
        }
        let len = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        let len = usize::try_from(len).map_err(|_| SnapshotError::Malformed("section too long".into()))?;
        self.take(len)
    }
}
