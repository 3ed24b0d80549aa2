use std::collections::HashMap;

use crate::lattice::{Site, MAX_DIM};

/// Site -> insertion index map: a dense growable box plus a hash map for
/// sites that would push the box past [`MAX_CELLS`].
///
/// Aggregates are strip-shaped and walks only ever read sites adjacent to
/// the aggregate, so nearly every read lands in the box.
#[derive(Debug, Clone)]
pub(crate) struct Occupancy {
    dim: usize,
    lo: [i64; MAX_DIM],
    ext: [u64; MAX_DIM],
    stride: [u64; MAX_DIM],
    /// `0` is empty, otherwise insertion index + 1.
    cells: Vec<u32>,
    overflow: HashMap<Site, u32>,
}

const MIN_PAD: u64 = 8;
const MAX_CELLS: u64 = 1 << 25;

impl Occupancy {
    pub(crate) fn new(dim: usize) -> Self {
        Occupancy {
            dim,
            lo: [0; MAX_DIM],
            ext: [0; MAX_DIM],
            stride: [0; MAX_DIM],
            cells: Vec::new(),
            overflow: HashMap::new(),
        }
    }

    #[inline]
    fn index(&self, s: &Site) -> Option<usize> {
        if self.cells.is_empty() {
            return None;
        }
        let c = s.raw();
        let mut idx = 0u64;
        for a in 0..self.dim {
            let off = c[a] as i64 - self.lo[a];
            if off < 0 || off as u64 >= self.ext[a] {
                return None;
            }
            idx += off as u64 * self.stride[a];
        }
        Some(idx as usize)
    }

    #[inline]
    pub(crate) fn get(&self, s: &Site) -> Option<u32> {
        match self.index(s) {
            Some(i) => {
                let v = self.cells[i];
                if v == 0 {
                    None
                } else {
                    Some(v - 1)
                }
            }
            None if self.overflow.is_empty() => None,
            None => self.overflow.get(s).copied(),
        }
    }

    #[inline]
    pub(crate) fn contains(&self, s: &Site) -> bool {
        self.get(s).is_some()
    }

    pub(crate) fn set(&mut self, s: &Site, value: u32) {
        let idx = match self.index(s) {
            Some(i) => i,
            None => {
                if !self.grow_to(s) {
                    self.overflow.insert(*s, value);
                    return;
                }
                self.index(s).expect("grown box covers site")
            }
        };
        self.cells[idx] = value + 1;
    }

    /// Enlarges the box to cover `s`; `false` if that would exceed the cap.
    fn grow_to(&mut self, s: &Site) -> bool {
        let c = s.raw();
        let mut lo = [0i64; MAX_DIM];
        let mut ext = [1u64; MAX_DIM];
        if self.cells.is_empty() {
            for a in 0..self.dim {
                lo[a] = c[a] as i64 - MIN_PAD as i64;
                ext[a] = 2 * MIN_PAD + 1;
            }
        } else {
            for a in 0..self.dim {
                let pad = (self.ext[a] / 2).max(MIN_PAD) as i64;
                let (mut l, mut h) = (self.lo[a], self.lo[a] + self.ext[a] as i64 - 1);
                let v = c[a] as i64;
                if v < l {
                    l = v - pad;
                }
                if v > h {
                    h = v + pad;
                }
                lo[a] = l;
                ext[a] = (h - l + 1) as u64;
            }
        }
        let mut stride = [0u64; MAX_DIM];
        let mut acc = 1u64;
        for a in (0..self.dim).rev() {
            stride[a] = acc;
            acc = acc.saturating_mul(ext[a]);
        }
        if acc > MAX_CELLS {
            return false;
        }
        let mut cells = vec![0u32; acc as usize];
        if !self.cells.is_empty() {
            // copy the old box row by row along the last axis
            let last = self.dim - 1;
            let rows = self.cells.len() as u64 / self.ext[last];
            for row in 0..rows {
                let mut rem = row;
                let mut src = 0u64;
                let mut dst = 0u64;
                for a in (0..last).rev() {
                    let k = rem % self.ext[a];
                    rem /= self.ext[a];
                    src += k * self.stride[a];
                    dst += (k as i64 + self.lo[a] - lo[a]) as u64 * stride[a];
                }
                dst += (self.lo[last] - lo[last]) as u64;
                let n = self.ext[last] as usize;
                cells[dst as usize..dst as usize + n]
                    .copy_from_slice(&self.cells[src as usize..src as usize + n]);
            }
        }
        self.lo = lo;
        self.ext = ext;
        self.stride = stride;
        self.cells = cells;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grows_and_keeps_contents() {
        for dim in 2..=4 {
            let mut occ = Occupancy::new(dim);
            let mut placed = Vec::new();
            let mut c = vec![0i32; dim];
            for i in 0..200u32 {
                let a = (i as usize) % dim;
                c[a] = ((i as i32 * 7919) % 61) - 30;
                let s = Site::new(&c).unwrap();
                if occ.get(&s).is_none() {
                    occ.set(&s, i);
                    placed.push((s, i));
                }
            }
            for (s, i) in &placed {
                assert_eq!(occ.get(s), Some(*i));
            }
            assert!(!occ.contains(&Site::new(&vec![i32::MAX; dim]).unwrap()));
        }
    }

    #[test]
    fn far_sites_spill_into_the_map() {
        let mut occ = Occupancy::new(4);
        let a = Site::new(&[0, 0, 0, 0]).unwrap();
        let b = Site::new(&[1 << 20, 1 << 20, 1 << 20, 1 << 20]).unwrap();
        occ.set(&a, 0);
        occ.set(&b, 1);
        assert_eq!(occ.get(&a), Some(0));
        assert_eq!(occ.get(&b), Some(1));
        assert!(!occ.overflow.is_empty());
        assert!(occ.cells.len() as u64 <= MAX_CELLS);
    }
}
