//! Integer-lattice geometry: sites of `Z^d`, the L1 norm, the diamond
//! `{x : |x|_1 <= n}` and the hyperoctahedral group (coordinate permutations
//! combined with sign flips).

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;

/// A point of `Z^d`, `1 <= d <= MAX_DIM`. Unused trailing coordinates are
/// kept at zero so the derived `Eq`/`Hash`/`Ord` are well defined.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteCoord {
    dim: u8,
    c: [i32; MAX_DIM],
}

pub fn check_dimension(d: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(Error::invalid(
            "dimension",
            format!("dimension must be in 1..={MAX_DIM}, got {d}"),
        ))
    }
}

impl SiteCoord {
    pub fn origin(d: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&d), "unsupported dimension {d}");
        SiteCoord {
            dim: d as u8,
            c: [0; MAX_DIM],
        }
    }

    pub fn new(coords: &[i32]) -> Result<Self> {
        check_dimension(coords.len())?;
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(SiteCoord {
            dim: coords.len() as u8,
            c,
        })
    }

    /// Panicking constructor for literals in tests and examples.
    pub fn from(coords: &[i32]) -> Self {
        Self::new(coords).expect("valid site")
    }

    /// `sign * e_axis`.
    pub fn unit(d: usize, axis: usize, sign: i32) -> Self {
        let mut x = Self::origin(d);
        x.c[axis] = sign.signum();
        x
    }

    /// The lattice site whose cell `y + (-1/2, 1/2]^d` contains the real point.
    pub fn containing_cell(point: &[f64]) -> Result<Self> {
        check_dimension(point.len())?;
        let mut c = [0; MAX_DIM];
        for (slot, &v) in c.iter_mut().zip(point) {
            let y = (v - 0.5).ceil();
            if !y.is_finite() || y.abs() > i32::MAX as f64 {
                return Err(Error::invalid("point", format!("coordinate {v} out of range")));
            }
            *slot = y as i32;
        }
        Ok(SiteCoord {
            dim: point.len() as u8,
            c,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.c[..self.dim as usize]
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> i32 {
        self.c[axis]
    }

    #[inline]
    pub fn l1_norm(&self) -> u64 {
        self.c.iter().map(|v| v.unsigned_abs() as u64).sum()
    }

    #[inline]
    pub fn l1_dist(&self, other: &SiteCoord) -> u64 {
        (*self - *other).l1_norm()
    }

    pub fn euclid_norm_sq(&self) -> f64 {
        self.c.iter().map(|&v| (v as f64) * (v as f64)).sum()
    }

    /// Moves one unit along `axis` in direction `sign` (`+1` or `-1`).
    #[inline]
    pub fn step(mut self, axis: usize, sign: i32) -> Self {
        self.c[axis] += sign;
        self
    }

    /// `k * self`, or `None` on overflow.
    pub fn scaled(&self, k: i64) -> Option<Self> {
        let mut out = *self;
        for v in out.c.iter_mut() {
            *v = i32::try_from((*v as i64).checked_mul(k)?).ok()?;
        }
        Some(out)
    }

    pub fn is_origin(&self) -> bool {
        self.c == [0; MAX_DIM]
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.coords().iter().map(|&v| v as f64).collect()
    }

    /// All `2d` nearest neighbours.
    pub fn neighbors(&self) -> impl Iterator<Item = SiteCoord> + '_ {
        (0..2 * self.dim()).map(move |i| self.step(i / 2, if i % 2 == 0 { 1 } else { -1 }))
    }

    /// Two 64-bit words identifying the site, for keyed hashing.
    #[inline]
    pub(crate) fn key_words(&self) -> [u64; 2] {
        let w = |a: i32, b: i32| (a as u32 as u64) | ((b as u32 as u64) << 32);
        [w(self.c[0], self.c[1]), w(self.c[2], self.c[3]) ^ ((self.dim as u64) << 61)]
    }
}

impl Add for SiteCoord {
    type Output = SiteCoord;
    fn add(mut self, rhs: SiteCoord) -> SiteCoord {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a += b;
        }
        self
    }
}

impl Sub for SiteCoord {
    type Output = SiteCoord;
    fn sub(mut self, rhs: SiteCoord) -> SiteCoord {
        debug_assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a -= b;
        }
        self
    }
}

impl Neg for SiteCoord {
    type Output = SiteCoord;
    fn neg(mut self) -> SiteCoord {
        for a in self.c.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl fmt::Debug for SiteCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for SiteCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for SiteCoord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SiteCoord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<i32>::deserialize(d)?;
        SiteCoord::new(&v).map_err(serde::de::Error::custom)
    }
}

pub fn l1_norm(x: &SiteCoord) -> u64 {
    x.l1_norm()
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Number of lattice points with `|x|_1 <= n` in `Z^d`:
/// `sum_k 2^k C(d,k) C(n,k)` (choose the `k` nonzero coordinates, their
/// signs, and a composition of at most `n` into `k` positive parts).
pub fn diamond_size(d: usize, n: u64) -> Result<u64> {
    check_dimension(d)?;
    let overflow = || Error::invalid("radius", format!("diamond size for d={d}, n={n} overflows u64"));
    let mut total: u128 = 0;
    for k in 0..=(d as u128).min(n as u128) {
        let term = binomial(d as u128, k)
            .and_then(|c| c.checked_mul(1u128 << k))
            .and_then(|c| binomial(n as u128, k).and_then(|b| c.checked_mul(b)))
            .ok_or_else(overflow)?;
        total = total.checked_add(term).ok_or_else(overflow)?;
    }
    u64::try_from(total).map_err(|_| overflow())
}

/// The lattice diamond `D_n = {x in Z^d : |x|_1 <= n}` around a center.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Diamond {
    pub dim: usize,
    pub radius: u64,
    pub center: SiteCoord,
}

impl Diamond {
    pub fn new(dim: usize, radius: u64) -> Result<Self> {
        check_dimension(dim)?;
        Ok(Diamond {
            dim,
            radius,
            center: SiteCoord::origin(dim),
        })
    }

    pub fn centered(center: SiteCoord, radius: u64) -> Self {
        Diamond {
            dim: center.dim(),
            radius,
            center,
        }
    }

    #[inline]
    pub fn contains(&self, x: &SiteCoord) -> bool {
        x.l1_dist(&self.center) <= self.radius
    }

    pub fn size(&self) -> Result<u64> {
        diamond_size(self.dim, self.radius)
    }

    /// Members in lexicographic order. Intended for small `d` and `n`.
    pub fn members(&self) -> DiamondMembers {
        let r = i32::try_from(self.radius).expect("diamond radius fits i32");
        let mut it = DiamondMembers {
            dim: self.dim,
            radius: r,
            cur: [0; MAX_DIM],
            center: self.center,
            done: false,
        };
        it.reset_from(0);
        it
    }
}

pub struct DiamondMembers {
    dim: usize,
    radius: i32,
    cur: [i32; MAX_DIM],
    center: SiteCoord,
    done: bool,
}

impl DiamondMembers {
    fn budget_before(&self, axis: usize) -> i32 {
        self.radius - self.cur[..axis].iter().map(|v| v.abs()).sum::<i32>()
    }

    fn reset_from(&mut self, axis: usize) {
        for i in axis..self.dim {
            self.cur[i] = -self.budget_before(i);
        }
    }
}

impl Iterator for DiamondMembers {
    type Item = SiteCoord;

    fn next(&mut self) -> Option<SiteCoord> {
        if self.done {
            return None;
        }
        let mut out = SiteCoord::origin(self.dim);
        out.c = self.cur;
        let out = out + self.center;
        // odometer: bump the last coordinate that still has room
        let mut axis = self.dim;
        loop {
            if axis == 0 {
                self.done = true;
                break;
            }
            axis -= 1;
            if self.cur[axis] < self.budget_before(axis) {
                self.cur[axis] += 1;
                self.reset_from(axis + 1);
                break;
            }
        }
        Some(out)
    }
}

/// An element of the hyperoctahedral group: `(g x)_i = s_i * x_{perm[i]}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignedPermutation {
    dim: usize,
    perm: [u8; MAX_DIM],
    /// bit `i` set means coordinate `i` is negated
    signs: u8,
}

impl SignedPermutation {
    pub fn identity(dim: usize) -> Self {
        SignedPermutation {
            dim,
            perm: [0, 1, 2, 3],
            signs: 0,
        }
    }

    pub fn apply(&self, x: &SiteCoord) -> SiteCoord {
        let mut out = SiteCoord::origin(self.dim);
        for i in 0..self.dim {
            let v = x.c[self.perm[i] as usize];
            out.c[i] = if self.signs >> i & 1 == 1 { -v } else { v };
        }
        out
    }

    pub fn apply_f64(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let v = x[self.perm[i] as usize];
                if self.signs >> i & 1 == 1 {
                    -v
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.signs == 0 && (0..self.dim).all(|i| self.perm[i] as usize == i)
    }
}

fn permutations(d: usize) -> Vec<[u8; MAX_DIM]> {
    fn rec(prefix: &mut Vec<u8>, d: usize, out: &mut Vec<[u8; MAX_DIM]>) {
        if prefix.len() == d {
            let mut p = [0, 1, 2, 3];
            p[..d].copy_from_slice(prefix);
            out.push(p);
            return;
        }
        for v in 0..d as u8 {
            if !prefix.contains(&v) {
                prefix.push(v);
                rec(prefix, d, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), d, &mut out);
    out
}

/// All `2^d d!` elements of the hyperoctahedral group, identity first.
pub fn octahedral_group(d: usize) -> Vec<SignedPermutation> {
    let mut out = Vec::with_capacity((1 << d) * (1..=d).product::<usize>());
    for perm in permutations(d) {
        for signs in 0..(1u8 << d) {
            out.push(SignedPermutation { dim: d, perm, signs });
        }
    }
    out
}

pub fn octahedral_orbit(x: &SiteCoord) -> BTreeSet<SiteCoord> {
    octahedral_group(x.dim()).iter().map(|g| g.apply(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn l1_norm_examples() {
        assert_eq!(l1_norm(&SiteCoord::from(&[2, -3])), 5);
        assert_eq!(l1_norm(&SiteCoord::origin(3)), 0);
        assert_eq!(l1_norm(&SiteCoord::unit(4, 0, 1)), 1);
    }

    #[test]
    fn diamond_size_examples() {
        assert_eq!(diamond_size(1, 2).unwrap(), 5);
        assert_eq!(diamond_size(2, 1).unwrap(), 5);
        assert_eq!(diamond_size(2, 2).unwrap(), 13);
        assert_eq!(diamond_size(3, 0).unwrap(), 1);
    }

    #[test]
    fn diamond_size_matches_brute_force() {
        for d in 1..=3usize {
            for n in 0..=10i32 {
                let mut count = 0u64;
                // plain box enumeration, independent of DiamondMembers
                fn rec(d: usize, axis: usize, used: i32, n: i32, count: &mut u64) {
                    if axis == d {
                        *count += 1;
                        return;
                    }
                    for v in -n..=n {
                        if used + v.abs() <= n {
                            rec(d, axis + 1, used + v.abs(), n, count);
                        }
                    }
                }
                rec(d, 0, 0, n, &mut count);
                assert_eq!(diamond_size(d, n as u64).unwrap(), count, "d={d} n={n}");
                let members: Vec<_> = Diamond::new(d, n as u64).unwrap().members().collect();
                assert_eq!(members.len() as u64, count);
                assert!(members.windows(2).all(|w| w[0] < w[1]));
                assert!(members.iter().all(|m| m.l1_norm() <= n as u64));
            }
        }
    }

    #[test]
    fn diamond_size_overflow_is_an_error() {
        assert!(diamond_size(4, u64::MAX / 2).is_err());
        assert!(diamond_size(5, 1).is_err());
    }

    #[test]
    fn orbit_examples() {
        assert_eq!(octahedral_orbit(&SiteCoord::from(&[1, 2])).len(), 8);
        assert_eq!(octahedral_orbit(&SiteCoord::from(&[1, 1])).len(), 4);
        let o = octahedral_orbit(&SiteCoord::origin(3));
        assert_eq!(o.len(), 1);
        assert!(o.contains(&SiteCoord::origin(3)));
        assert_eq!(octahedral_group(4).len(), 384);
        assert!(octahedral_group(2)[0].is_identity());
    }

    #[test]
    fn containing_cell_uses_half_open_cells() {
        assert_eq!(SiteCoord::containing_cell(&[0.5]).unwrap(), SiteCoord::from(&[0]));
        assert_eq!(SiteCoord::containing_cell(&[0.5001]).unwrap(), SiteCoord::from(&[1]));
        assert_eq!(SiteCoord::containing_cell(&[-0.5]).unwrap(), SiteCoord::from(&[-1]));
        assert_eq!(
            SiteCoord::containing_cell(&[2.2, -1.7]).unwrap(),
            SiteCoord::from(&[2, -2])
        );
    }

    fn site_pair() -> impl Strategy<Value = (SiteCoord, SiteCoord)> {
        (1usize..=4).prop_flat_map(|d| {
            let v = || proptest::collection::vec(-1000i32..1000, d);
            (v(), v()).prop_map(|(a, b)| (SiteCoord::from(&a), SiteCoord::from(&b)))
        })
    }

    proptest! {
        #[test]
        fn triangle_inequality((x, y) in site_pair()) {
            prop_assert!((x + y).l1_norm() <= x.l1_norm() + y.l1_norm());
        }

        #[test]
        fn orbit_preserves_norm(v in proptest::collection::vec(-50i32..50, 1..=4)) {
            let x = SiteCoord::from(&v);
            let orbit = octahedral_orbit(&x);
            let group_order = (1usize << x.dim()) * (1..=x.dim()).product::<usize>();
            prop_assert_eq!(group_order % orbit.len(), 0);
            for y in orbit {
                prop_assert_eq!(y.l1_norm(), x.l1_norm());
            }
        }
    }
}
