//! Geometry of `Z^d` with sources on the hyperplane `H = {0} x Z^{d-1}`.
//!
//! Sites are small `Copy` values with a runtime dimension (2 to 4). All
//! coordinate arithmetic is checked; overflow surfaces as
//! [`LatticeError::Overflow`] instead of wrapping.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::Pow;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;
/// Smallest supported lattice dimension.
pub const MIN_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("unsupported dimension {0} (supported: 2..=4)")]
    UnsupportedDimension(usize),
    #[error("coordinate overflow")]
    Overflow,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("site {0} is not on the source hyperplane")]
    NotOnHyperplane(Site),
    #[error("invalid rational `{0}`")]
    InvalidRational(String),
    #[error("invalid cone: {0}")]
    InvalidCone(String),
}

pub fn check_dim(d: usize) -> Result<(), LatticeError> {
    if (MIN_DIM..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(LatticeError::UnsupportedDimension(d))
    }
}

/// One of the `2d` unit steps `±e_i`, encoded as `2 * axis + negative`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Direction(u8);

impl Direction {
    pub fn new(axis: usize, negative: bool) -> Self {
        debug_assert!(axis < MAX_DIM);
        Direction((axis as u8) << 1 | negative as u8)
    }

    /// Direction from its code in `0..2d`.
    #[inline]
    pub fn from_code(code: u8) -> Self {
        Direction(code)
    }

    #[inline]
    pub fn code(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn axis(self) -> usize {
        (self.0 >> 1) as usize
    }

    #[inline]
    pub fn is_negative(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn opposite(self) -> Self {
        Direction(self.0 ^ 1)
    }

    /// `+e_{axis}`.
    pub fn plus(axis: usize) -> Self {
        Self::new(axis, false)
    }

    /// `-e_{axis}`.
    pub fn minus(axis: usize) -> Self {
        Self::new(axis, true)
    }
}

/// A point of `Z^d`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Site {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl Site {
    pub fn new(coords: &[i32]) -> Result<Self, LatticeError> {
        check_dim(coords.len())?;
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Site {
            dim: coords.len() as u8,
            coords: c,
        })
    }

    pub fn origin(dim: usize) -> Result<Self, LatticeError> {
        check_dim(dim)?;
        Ok(Site {
            dim: dim as u8,
            coords: [0; MAX_DIM],
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> i32 {
        self.coords[axis]
    }

    /// Raw padded coordinates; entries past `dim()` are zero.
    #[inline]
    pub(crate) fn raw(&self) -> &[i32; MAX_DIM] {
        &self.coords
    }

    /// `max_i |x_i|`.
    pub fn inf_norm(&self) -> u32 {
        self.coords().iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    /// Infinite norm of the orthogonal projection onto `H`.
    #[inline]
    pub fn hyperplane_norm(&self) -> u32 {
        self.coords[1..self.dim as usize]
            .iter()
            .map(|c| c.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// Orthogonal projection onto `H` (first coordinate zeroed).
    pub fn project(&self) -> Source {
        let mut s = *self;
        s.coords[0] = 0;
        Source(s)
    }

    /// Membership in the strip `Z_K = Z x [-K, K]^{d-1}`.
    #[inline]
    pub fn in_strip(&self, k: u32) -> bool {
        self.coords[1..self.dim as usize]
            .iter()
            .all(|c| c.unsigned_abs() <= k)
    }

    /// Infinite-norm distance between the projections of two sites onto `H`.
    #[inline]
    pub fn hyperplane_distance(&self, other: &Site) -> u64 {
        let mut m = 0u64;
        for i in 1..self.dim as usize {
            let d = (self.coords[i] as i64 - other.coords[i] as i64).unsigned_abs();
            m = m.max(d);
        }
        m
    }

    pub fn translate(&self, k: &Source) -> Result<Site, LatticeError> {
        if k.dim() != self.dim() {
            return Err(LatticeError::DimensionMismatch(self.dim(), k.dim()));
        }
        let mut out = *self;
        for i in 0..self.dim() {
            out.coords[i] = self.coords[i]
                .checked_add(k.0.coords[i])
                .ok_or(LatticeError::Overflow)?;
        }
        Ok(out)
    }

    /// Neighbour in direction `dir`.
    #[inline]
    pub fn step(&self, dir: Direction) -> Result<Site, LatticeError> {
        let mut out = *self;
        let a = dir.axis();
        debug_assert!(a < self.dim as usize);
        out.coords[a] = if dir.is_negative() {
            self.coords[a].checked_sub(1)
        } else {
            self.coords[a].checked_add(1)
        }
        .ok_or(LatticeError::Overflow)?;
        Ok(out)
    }

    /// Whether the two sites are nearest neighbours.
    pub fn is_neighbor(&self, other: &Site) -> bool {
        if self.dim != other.dim {
            return false;
        }
        let mut total = 0u64;
        for i in 0..self.dim() {
            total += (self.coords[i] as i64 - other.coords[i] as i64).unsigned_abs();
        }
        total == 1
    }
}

impl Ord for Site {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dim
            .cmp(&other.dim)
            .then_with(|| self.coords().cmp(other.coords()))
    }
}

impl PartialOrd for Site {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", c)?;
        }
        write!(f, ")")
    }
}

impl Serialize for Site {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<i32>::deserialize(d)?;
        Site::new(&v).map_err(serde::de::Error::custom)
    }
}

/// A site of the source hyperplane `H` (first coordinate zero).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Source(Site);

impl Source {
    pub fn new(site: Site) -> Result<Self, LatticeError> {
        if site.coords[0] != 0 {
            return Err(LatticeError::NotOnHyperplane(site));
        }
        Ok(Source(site))
    }

    /// Source from its `d - 1` hyperplane coordinates.
    pub fn from_hyperplane(coords: &[i32]) -> Result<Self, LatticeError> {
        let mut full = [0i32; MAX_DIM];
        if coords.len() + 1 > MAX_DIM {
            return Err(LatticeError::UnsupportedDimension(coords.len() + 1));
        }
        full[1..=coords.len()].copy_from_slice(coords);
        Ok(Source(Site::new(&full[..=coords.len()])?))
    }

    pub fn origin(dim: usize) -> Result<Self, LatticeError> {
        Ok(Source(Site::origin(dim)?))
    }

    #[inline]
    pub fn site(&self) -> Site {
        self.0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Level of the source: `||z||` in the infinite norm.
    #[inline]
    pub fn level(&self) -> u32 {
        self.0.hyperplane_norm()
    }

    pub fn negate(&self) -> Source {
        let mut s = self.0;
        for c in s.coords.iter_mut() {
            *c = c.wrapping_neg();
        }
        Source(s)
    }

    pub fn translate(&self, k: &Source) -> Result<Source, LatticeError> {
        Ok(Source(self.0.translate(k)?))
    }

    /// Sources of the hyperplane ball `B(self, r) = self + H_r` in lexicographic order.
    pub fn ball(&self, r: u32) -> Vec<Source> {
        let d = self.dim();
        let r = r as i64;
        let mut out = Vec::new();
        let mut offs = vec![-r; d - 1];
        loop {
            let mut c = [0i32; MAX_DIM];
            let mut ok = true;
            for i in 1..d {
                let v = self.0.coords[i] as i64 + offs[i - 1];
                if v < i32::MIN as i64 || v > i32::MAX as i64 {
                    ok = false;
                    break;
                }
                c[i] = v as i32;
            }
            if ok {
                out.push(Source(Site {
                    dim: d as u8,
                    coords: c,
                }));
            }
            // odometer increment, last axis fastest
            let mut i = d - 1;
            loop {
                if i == 0 {
                    return out;
                }
                offs[i - 1] += 1;
                if offs[i - 1] <= r {
                    break;
                }
                offs[i - 1] = -r;
                i -= 1;
            }
        }
    }
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Source {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Source {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let site = Site::deserialize(d)?;
        Source::new(site).map_err(serde::de::Error::custom)
    }
}

pub fn inf_norm(s: &Site) -> u32 {
    s.inf_norm()
}

pub fn project_to_hyperplane(s: &Site) -> Source {
    s.project()
}

pub fn in_strip(s: &Site, k: u32) -> bool {
    s.in_strip(k)
}

pub fn translate(s: &Site, k: &Source) -> Result<Site, LatticeError> {
    s.translate(k)
}

/// Whether the hyperplane balls `B(z1, r1)` and `B(z2, r2)` intersect.
///
/// For infinite-norm cubes this is `||z1 - z2|| <= r1 + r2`.
#[inline]
pub fn hball_overlap(z1: &Source, r1: u32, z2: &Source, r2: u32) -> bool {
    z1.site().hyperplane_distance(&z2.site()) <= r1 as u64 + r2 as u64
}

/// Whether the hyperplane ball `B(z, r)` meets the strip `Z_K`.
#[inline]
pub fn hball_meets_strip(z: &Source, r: u32, k: u32) -> bool {
    z.level() as u64 <= k as u64 + r as u64
}

/// Number of sources in `B(0, r)` for a lattice of dimension `dim`.
pub fn hball_size(dim: usize, r: u32) -> u64 {
    (2 * r as u64 + 1).pow(dim as u32 - 1)
}

/// `|S_r| = #{z in H : ||z|| = r}`.
pub fn hsphere_size(dim: usize, r: u32) -> u64 {
    if r == 0 {
        1
    } else {
        hball_size(dim, r) - hball_size(dim, r - 1)
    }
}

/// Non-negative rational number `num / den` in lowest terms.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Rational {
    pub fn new(num: u64, den: u64) -> Result<Self, LatticeError> {
        if den == 0 {
            return Err(LatticeError::InvalidRational(format!("{}/{}", num, den)));
        }
        let g = gcd(num, den).max(1);
        Ok(Rational {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(v: u64) -> Self {
        Rational { num: v, den: 1 }
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl FromStr for Rational {
    type Err = LatticeError;

    /// Accepts `p/q`, integers and plain decimals such as `0.125`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LatticeError::InvalidRational(s.to_string());
        let t = s.trim();
        if let Some((p, q)) = t.split_once('/') {
            let p: u64 = p.trim().parse().map_err(|_| bad())?;
            let q: u64 = q.trim().parse().map_err(|_| bad())?;
            return Rational::new(p, q);
        }
        let (int, frac) = match t.split_once('.') {
            Some((i, f)) => (i, f),
            None => (t, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        if frac.len() > 18 {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int_v: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = int_v
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_v))
            .ok_or_else(bad)?;
        Rational::new(num, den)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Accepts `"p/q"` strings as well as plain integers and decimals.
impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Float(f64),
            Str(String),
        }
        let s = match Repr::deserialize(d)? {
            Repr::Int(v) => return Ok(Rational::integer(v)),
            // shortest round-trip form, so 0.6 reads as 3/5
            Repr::Float(v) => format!("{v}"),
            Repr::Str(s) => s,
        };
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Cone `C_eps^alpha = { z : |z_1| <= eps * ||p_H(z)||^alpha }`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub epsilon: Rational,
    pub alpha: Rational,
}

impl ConeSpec {
    pub fn new(epsilon: Rational, alpha: Rational) -> Result<Self, LatticeError> {
        if epsilon.is_zero() {
            return Err(LatticeError::InvalidCone("epsilon must be positive".into()));
        }
        if alpha.is_zero() || alpha.num >= alpha.den {
            return Err(LatticeError::InvalidCone("alpha must lie in (0,1)".into()));
        }
        if alpha.den > u32::MAX as u64 {
            return Err(LatticeError::InvalidCone("alpha denominator too large".into()));
        }
        Ok(ConeSpec { epsilon, alpha })
    }

    pub fn parse(epsilon: &str, alpha: &str) -> Result<Self, LatticeError> {
        Self::new(epsilon.parse()?, alpha.parse()?)
    }

    /// Cone half-width `eps * l^alpha` at hyperplane level `l` (floating point).
    pub fn half_width(&self, level: u32) -> f64 {
        self.epsilon.to_f64() * (level as f64).powf(self.alpha.to_f64())
    }

    /// Exact test of `|z1| <= eps * l^alpha`, i.e. `(|z1| b)^q <= a^q l^p`
    /// with `eps = a/b` and `alpha = p/q`.
    pub fn contains_exact(&self, z1: u64, level: u64) -> bool {
        let (a, b) = (self.epsilon.num, self.epsilon.den);
        let (p, q) = (self.alpha.num as u32, self.alpha.den as u32);
        let lhs = BigUint::from(z1) * BigUint::from(b);
        let lhs = Pow::pow(lhs, q);
        let rhs = Pow::pow(BigUint::from(a), q) * Pow::pow(BigUint::from(level), p);
        lhs <= rhs
    }

    pub fn contains(&self, s: &Site) -> bool {
        let z1 = s.coord(0).unsigned_abs() as u64;
        if z1 == 0 {
            return true;
        }
        let level = s.hyperplane_norm() as u64;
        if level == 0 {
            return false;
        }
        // Float screen, then exact arithmetic near the boundary.
        let rhs = self.half_width(level as u32);
        let lhs = z1 as f64;
        let margin = 1e-9 * rhs.max(1.0);
        if lhs < rhs - margin {
            true
        } else if lhs > rhs + margin {
            false
        } else {
            self.contains_exact(z1, level)
        }
    }
}

pub fn cone_contains(s: &Site, c: &ConeSpec) -> bool {
    c.contains(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(c: &[i32]) -> Site {
        Site::new(c).unwrap()
    }

    fn src(c: &[i32]) -> Source {
        Source::new(site(c)).unwrap()
    }

    #[test]
    fn inf_norm_examples() {
        assert_eq!(inf_norm(&site(&[0, 0])), 0);
        assert_eq!(inf_norm(&site(&[3, -7])), 7);
        assert_eq!(inf_norm(&site(&[-2, 5, 4])), 5);
        assert_eq!(inf_norm(&site(&[i32::MIN, 0])), 1u32 << 31);
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_to_hyperplane(&site(&[4, 1])), src(&[0, 1]));
        assert_eq!(project_to_hyperplane(&site(&[0, 9, -3])), src(&[0, 9, -3]));
        assert_eq!(project_to_hyperplane(&site(&[-5, 0, 0])), src(&[0, 0, 0]));
    }

    #[test]
    fn strip_examples() {
        assert!(in_strip(&site(&[100, 2]), 2));
        assert!(!in_strip(&site(&[0, 3]), 2));
        assert!(in_strip(&site(&[7, -2, 2]), 2));
    }

    #[test]
    fn overlap_examples() {
        assert!(hball_overlap(&src(&[0, 0]), 1, &src(&[0, 2]), 1));
        assert!(!hball_overlap(&src(&[0, 0]), 1, &src(&[0, 3]), 1));
        assert!(hball_overlap(&src(&[0, 0, 0]), 2, &src(&[0, 3, 3]), 1));
    }

    #[test]
    fn cone_examples() {
        let c = ConeSpec::parse("1", "0.9").unwrap();
        assert!(cone_contains(&site(&[0, 17]), &c));
        assert!(!cone_contains(&site(&[3, 2]), &c));
        assert!(cone_contains(&site(&[1, 2]), &c));
        // on H at level 0 only the origin is inside
        assert!(cone_contains(&site(&[0, 0]), &c));
        assert!(!cone_contains(&site(&[1, 0]), &c));
    }

    #[test]
    fn cone_exact_boundary() {
        // eps = 2, alpha = 1/2: |z1| <= 2 sqrt(l); l = 4 gives exactly 4
        let c = ConeSpec::parse("2", "1/2").unwrap();
        assert!(c.contains(&site(&[4, 4])));
        assert!(c.contains(&site(&[-4, -4])));
        assert!(!c.contains(&site(&[5, 4])));
        assert!(c.contains_exact(4, 4));
        assert!(!c.contains_exact(5, 4));
    }

    #[test]
    fn cone_rejects_bad_parameters() {
        assert!(ConeSpec::parse("0", "0.5").is_err());
        assert!(ConeSpec::parse("1", "1").is_err());
        assert!(ConeSpec::parse("1", "0").is_err());
    }

    #[test]
    fn translate_examples() {
        assert_eq!(translate(&site(&[1, 2]), &src(&[0, 3])).unwrap(), site(&[1, 5]));
        let s = site(&[5, -8]);
        assert_eq!(translate(&s, &Source::origin(2).unwrap()).unwrap(), s);
        assert_eq!(
            translate(&site(&[2, -1, 4]), &src(&[0, 1, -4])).unwrap(),
            site(&[2, 0, 0])
        );
    }

    #[test]
    fn translate_overflow_is_an_error() {
        let s = site(&[0, i32::MAX]);
        assert_eq!(translate(&s, &src(&[0, 1])), Err(LatticeError::Overflow));
        assert_eq!(
            site(&[i32::MIN, 0]).step(Direction::minus(0)),
            Err(LatticeError::Overflow)
        );
    }

    #[test]
    fn dimension_checks() {
        assert!(Site::new(&[1]).is_err());
        assert!(Site::new(&[1, 2, 3, 4, 5]).is_err());
        assert!(Source::new(site(&[1, 0])).is_err());
        assert!(translate(&site(&[0, 0]), &src(&[0, 0, 0])).is_err());
    }

    #[test]
    fn rational_parsing() {
        assert_eq!("0.9".parse::<Rational>().unwrap(), Rational::new(9, 10).unwrap());
        assert_eq!("6/8".parse::<Rational>().unwrap(), Rational::new(3, 4).unwrap());
        assert_eq!("1000".parse::<Rational>().unwrap(), Rational::integer(1000));
        assert_eq!(".5".parse::<Rational>().unwrap(), Rational::new(1, 2).unwrap());
        assert!("abc".parse::<Rational>().is_err());
        assert!("1/0".parse::<Rational>().is_err());
        assert!("-1".parse::<Rational>().is_err());
    }

    #[test]
    fn ball_enumeration() {
        let b = src(&[0, 3]).ball(2);
        assert_eq!(b.len(), 5);
        assert_eq!(b[0], src(&[0, 1]));
        assert_eq!(b[4], src(&[0, 5]));
        let b3 = Source::origin(3).unwrap().ball(1);
        assert_eq!(b3.len(), 9);
        assert!(b3.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(hball_size(3, 1), 9);
        assert_eq!(hsphere_size(2, 10), 2);
        assert_eq!(hsphere_size(2, 80), 2);
        assert_eq!(hsphere_size(3, 1), 8);
    }
}
