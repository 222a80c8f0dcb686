//! Elements, sets, subgroups and families over `Z_4^n` and `Z_2^m`.
//!
//! Elements are stored as integer codes. Coordinate 0 is the most
//! significant digit, so numeric order on codes is lexicographic order on
//! coordinate tuples, and every "lexicographically least" tie-break in the
//! crate is just a minimum over codes. A `Z_4^n` code packs one base-4 digit
//! per 2-bit lane; a `Z_2^m` code packs one bit per coordinate.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{pow2, ratio, Rational};

pub const MAX_Z4_DIM: usize = 12;
pub const MAX_Z2_DIM: usize = 24;

const LOW_LANES: u32 = 0x5555_5555;
const HIGH_LANES: u32 = 0xAAAA_AAAA;

/// Parity of the `F_2` dot product `r . x`.
#[inline]
pub fn dot2(r: u32, x: u32) -> bool {
    (r & x).count_ones() & 1 == 1
}

/// Digitwise addition mod 4 on packed codes.
#[inline]
pub fn add4(a: u32, b: u32) -> u32 {
    ((a & !HIGH_LANES) + (b & !HIGH_LANES)) ^ ((a ^ b) & HIGH_LANES)
}

#[inline]
pub fn neg4(a: u32) -> u32 {
    ((a & LOW_LANES) << 1) ^ a
}

#[inline]
pub fn sub4(a: u32, b: u32) -> u32 {
    add4(a, neg4(b))
}

/// The doubling map `x -> 2.x`.
#[inline]
pub fn double4(a: u32) -> u32 {
    (a & LOW_LANES) << 1
}

/// `sum_i r_i x_i mod 4`, the exponent of the character `x -> i^{r.x}`.
#[inline]
pub fn dot4(r: u32, x: u32, n: usize) -> u32 {
    let mut acc = 0u32;
    for lane in 0..n {
        let ri = (r >> (2 * lane)) & 3;
        let xi = (x >> (2 * lane)) & 3;
        acc += ri * xi;
    }
    acc & 3
}

/// Splits a `Z_4^n` code into (parity bits, high bits) as `Z_2^n` codes.
///
/// `x = t_h + 2.a` digitwise, where `t_h` has digit 1 exactly where `h` has a
/// one. The parity bits index the coset of `ker 2`, the high bits are the
/// position inside it under the identification `2 -> 1`.
#[inline]
pub fn split4(code: u32, n: usize) -> (u32, u32) {
    let mut h = 0u32;
    let mut a = 0u32;
    for lane in 0..n {
        h |= ((code >> (2 * lane)) & 1) << lane;
        a |= ((code >> (2 * lane + 1)) & 1) << lane;
    }
    (h, a)
}

#[inline]
pub fn join4(h: u32, a: u32, n: usize) -> u32 {
    let mut code = 0u32;
    for lane in 0..n {
        code |= ((h >> lane) & 1) << (2 * lane);
        code |= ((a >> lane) & 1) << (2 * lane + 1);
    }
    code
}

pub fn z4_order(n: usize) -> u64 {
    1u64 << (2 * n)
}

pub fn z2_order(m: usize) -> u64 {
    1u64 << m
}

fn check_z4_dim(n: usize) -> Result<()> {
    if n > MAX_Z4_DIM {
        return Err(Error::CapExceeded {
            what: "z4 dimension",
            value: n,
            cap: MAX_Z4_DIM,
        });
    }
    Ok(())
}

fn check_z2_dim(m: usize) -> Result<()> {
    if m > MAX_Z2_DIM {
        return Err(Error::CapExceeded {
            what: "z2 dimension",
            value: m,
            cap: MAX_Z2_DIM,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElemZ4 {
    n: u8,
    code: u32,
}

impl ElemZ4 {
    pub fn new(n: usize, code: u32) -> Result<Self> {
        check_z4_dim(n)?;
        if u64::from(code) >= z4_order(n) {
            return Err(Error::invalid(format!("code {code} out of range for Z_4^{n}")));
        }
        Ok(ElemZ4 { n: n as u8, code })
    }

    pub fn zero(n: usize) -> Self {
        ElemZ4 { n: n as u8, code: 0 }
    }

    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        let n = digits.len();
        check_z4_dim(n)?;
        let mut code = 0u32;
        for &d in digits {
            if d > 3 {
                return Err(Error::invalid(format!("digit {d} is not in Z_4")));
            }
            code = (code << 2) | u32::from(d);
        }
        Ok(ElemZ4 { n: n as u8, code })
    }

    pub fn digits(&self) -> Vec<u8> {
        let n = self.dim();
        (0..n).map(|i| ((self.code >> (2 * (n - 1 - i))) & 3) as u8).collect()
    }

    pub fn dim(&self) -> usize {
        usize::from(self.n)
    }

    pub fn code(&self) -> u32 {
        self.code
    }

    pub fn add(self, other: Self) -> Self {
        assert_eq!(self.n, other.n, "adding elements of different groups");
        ElemZ4 {
            n: self.n,
            code: add4(self.code, other.code),
        }
    }

    pub fn neg(self) -> Self {
        ElemZ4 {
            n: self.n,
            code: neg4(self.code),
        }
    }

    pub fn double(self) -> Self {
        ElemZ4 {
            n: self.n,
            code: double4(self.code),
        }
    }

    /// True iff every digit is 0 or 2, i.e. the element lies in `Im 2 = ker 2`.
    pub fn in_image_of_two(&self) -> bool {
        self.code & LOW_LANES == 0
    }
}

/// The canonical section `t_y` with `2.t_y = y`: digitwise halving.
pub fn section_t(y: ElemZ4) -> Result<ElemZ4> {
    if !y.in_image_of_two() {
        return Err(Error::invalid(format!(
            "{:?} has an odd digit and is not in Im 2",
            y.digits()
        )));
    }
    Ok(ElemZ4 {
        n: y.n,
        code: (y.code & HIGH_LANES) >> 1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ElemZ2 {
    m: u8,
    code: u32,
}

impl ElemZ2 {
    pub fn new(m: usize, code: u32) -> Result<Self> {
        check_z2_dim(m)?;
        if u64::from(code) >= z2_order(m) {
            return Err(Error::invalid(format!("code {code} out of range for Z_2^{m}")));
        }
        Ok(ElemZ2 { m: m as u8, code })
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let m = bits.len();
        check_z2_dim(m)?;
        let mut code = 0u32;
        for &b in bits {
            if b > 1 {
                return Err(Error::invalid(format!("bit {b} is not in Z_2")));
            }
            code = (code << 1) | u32::from(b);
        }
        Ok(ElemZ2 { m: m as u8, code })
    }

    pub fn bits(&self) -> Vec<u8> {
        let m = self.dim();
        (0..m).map(|i| ((self.code >> (m - 1 - i)) & 1) as u8).collect()
    }

    pub fn dim(&self) -> usize {
        usize::from(self.m)
    }

    pub fn code(&self) -> u32 {
        self.code
    }

    pub fn add(self, other: Self) -> Self {
        assert_eq!(self.m, other.m, "adding elements of different groups");
        ElemZ2 {
            m: self.m,
            code: self.code ^ other.code,
        }
    }

    /// Value of the character indexed by `self` at `x`, as the exponent bit.
    pub fn dot(self, x: Self) -> bool {
        dot2(self.code, x.code)
    }
}

/// A subset of `Z_4^n`, stored as a bitmask over codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Z4Set {
    n: usize,
    bits: FixedBitSet,
}

impl Z4Set {
    pub fn empty(n: usize) -> Result<Self> {
        check_z4_dim(n)?;
        Ok(Z4Set {
            n,
            bits: FixedBitSet::with_capacity(z4_order(n) as usize),
        })
    }

    pub fn full(n: usize) -> Result<Self> {
        let mut s = Self::empty(n)?;
        s.bits.insert_range(..);
        Ok(s)
    }

    /// Builds a set from codes; duplicates and out-of-range codes are errors.
    pub fn from_codes(n: usize, codes: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut s = Self::empty(n)?;
        let order = z4_order(n);
        for c in codes {
            if u64::from(c) >= order {
                return Err(Error::invalid(format!("code {c} out of range for Z_4^{n}")));
            }
            if s.bits.put(c as usize) {
                return Err(Error::invalid(format!(
                    "duplicate element {:?}",
                    ElemZ4 { n: n as u8, code: c }.digits()
                )));
            }
        }
        Ok(s)
    }

    pub fn from_digit_rows(rows: &[&[u8]]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        let codes = rows
            .iter()
            .map(|r| {
                if r.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: r.len(),
                    });
                }
                ElemZ4::from_digits(r).map(|e| e.code())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_codes(n, codes)
    }

    pub fn ambient_n(&self) -> usize {
        self.n
    }

    pub fn group_order(&self) -> u64 {
        z4_order(self.n)
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn contains(&self, code: u32) -> bool {
        self.bits.contains(code as usize)
    }

    /// Member codes in increasing (lexicographic) order.
    pub fn members(&self) -> impl Iterator<Item = u32> + '_ {
        self.bits.ones().map(|i| i as u32)
    }

    pub fn elems(&self) -> Vec<ElemZ4> {
        self.members().map(|code| ElemZ4 { n: self.n as u8, code }).collect()
    }

    pub fn density(&self) -> Rational {
        ratio(self.len() as u64, self.group_order())
    }

    pub fn with_member(&self, code: u32) -> Result<Self> {
        let mut s = self.clone();
        if u64::from(code) >= self.group_order() {
            return Err(Error::invalid(format!("code {code} out of range")));
        }
        s.bits.insert(code as usize);
        Ok(s)
    }
}

/// A subset of `Z_2^m`, stored as a bitmask over codes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Z2Set {
    m: usize,
    bits: FixedBitSet,
}

impl Z2Set {
    pub fn empty(m: usize) -> Result<Self> {
        check_z2_dim(m)?;
        Ok(Z2Set {
            m,
            bits: FixedBitSet::with_capacity(z2_order(m) as usize),
        })
    }

    pub fn full(m: usize) -> Result<Self> {
        let mut s = Self::empty(m)?;
        s.bits.insert_range(..);
        Ok(s)
    }

    pub fn from_codes(m: usize, codes: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut s = Self::empty(m)?;
        let order = z2_order(m);
        for c in codes {
            if u64::from(c) >= order {
                return Err(Error::invalid(format!("code {c} out of range for Z_2^{m}")));
            }
            if s.bits.put(c as usize) {
                return Err(Error::invalid(format!("duplicate element {c:0m$b}")));
            }
        }
        Ok(s)
    }

    /// Like [`Z2Set::from_codes`] but silently merges duplicates.
    pub fn collect(m: usize, codes: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut s = Self::empty(m)?;
        let order = z2_order(m);
        for c in codes {
            if u64::from(c) >= order {
                return Err(Error::invalid(format!("code {c} out of range for Z_2^{m}")));
            }
            s.bits.insert(c as usize);
        }
        Ok(s)
    }

    pub fn from_subgroup(h: &Subgroup2) -> Self {
        Self::collect(h.ambient_m(), h.members()).expect("subgroup members in range")
    }

    pub fn ambient_m(&self) -> usize {
        self.m
    }

    pub fn group_order(&self) -> u64 {
        z2_order(self.m)
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn contains(&self, code: u32) -> bool {
        self.bits.contains(code as usize)
    }

    pub fn members(&self) -> impl Iterator<Item = u32> + '_ {
        self.bits.ones().map(|i| i as u32)
    }

    pub fn density(&self) -> Rational {
        ratio(self.len() as u64, self.group_order())
    }

    /// `{a + x : a in self}`.
    pub fn translate(&self, x: u32) -> Self {
        Self::collect(self.m, self.members().map(|a| a ^ x)).expect("translation stays in range")
    }

    /// `|self ∩ (x + H)|`.
    pub fn count_in_coset(&self, h: &Subgroup2, x: u32) -> usize {
        self.members().filter(|&a| h.contains(a ^ x)).count()
    }

    /// `self ∩ (x + H) - x`, expressed in the coordinates of `H`.
    pub fn restrict_to_coset(&self, h: &Subgroup2, x: u32) -> Self {
        let codes = self.members().filter_map(|a| h.coords(a ^ x)).collect::<Vec<_>>();
        Self::collect(h.dim(), codes).expect("coordinates in range")
    }

    /// The `k` lexicographically least members.
    pub fn least(&self, k: usize) -> Self {
        Self::collect(self.m, self.members().take(k)).expect("subset in range")
    }

    pub fn is_subset(&self, other: &Z2Set) -> bool {
        self.m == other.m && self.bits.is_subset(&other.bits)
    }
}

/// Reduced row echelon form over `F_2`: rows sorted by decreasing leading
/// bit, and every leading bit cleared in all other rows.
pub fn rref(vecs: impl IntoIterator<Item = u32>) -> Vec<u32> {
    let mut rows: Vec<u32> = Vec::new();
    for mut v in vecs {
        for r in &rows {
            if v & leading_bit(*r) != 0 {
                v ^= r;
            }
        }
        if v != 0 {
            let p = leading_bit(v);
            for r in rows.iter_mut() {
                if *r & p != 0 {
                    *r ^= v;
                }
            }
            rows.push(v);
        }
    }
    rows.sort_unstable_by(|a, b| b.cmp(a));
    rows
}

#[inline]
fn leading_bit(v: u32) -> u32 {
    debug_assert!(v != 0);
    1u32 << (31 - v.leading_zeros())
}

/// Basis of `{x : r.x = 0 for every row r}` for rows already in RREF.
fn null_space(m: usize, rows: &[u32]) -> Vec<u32> {
    let pivot_mask = rows.iter().fold(0u32, |acc, r| acc | leading_bit(*r));
    let mut out = Vec::new();
    for j in 0..m {
        let bit = 1u32 << j;
        if pivot_mask & bit != 0 {
            continue;
        }
        let mut v = bit;
        for r in rows {
            if r & bit != 0 {
                v |= leading_bit(*r);
            }
        }
        out.push(v);
    }
    rref(out)
}

/// A subgroup of `Z_2^m` carried by an RREF basis together with an RREF
/// basis of its annihilator in the dual group.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SubgroupRepr", into = "SubgroupRepr")]
pub struct Subgroup2 {
    m: usize,
    basis: Vec<u32>,
    annihilator: Vec<u32>,
    pivot_mask: u32,
}

#[derive(Serialize, Deserialize)]
struct SubgroupRepr {
    ambient_m: usize,
    basis: Vec<u32>,
    annihilator: Vec<u32>,
}

impl TryFrom<SubgroupRepr> for Subgroup2 {
    type Error = Error;

    fn try_from(r: SubgroupRepr) -> Result<Self> {
        let h = Subgroup2::from_generators(r.ambient_m, r.basis.iter().copied())?;
        if h.basis != r.basis || h.annihilator != r.annihilator {
            return Err(Error::invalid("subgroup basis/annihilator are not the canonical pair"));
        }
        Ok(h)
    }
}

impl From<Subgroup2> for SubgroupRepr {
    fn from(h: Subgroup2) -> Self {
        SubgroupRepr {
            ambient_m: h.m,
            basis: h.basis,
            annihilator: h.annihilator,
        }
    }
}

impl PartialOrd for Subgroup2 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Subgroup2 {
    /// Canonical order: ambient dimension, then subgroup dimension, then the
    /// RREF basis read lexicographically.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.m, self.basis.len(), &self.basis).cmp(&(other.m, other.basis.len(), &other.basis))
    }
}

impl Subgroup2 {
    fn build(m: usize, basis: Vec<u32>) -> Self {
        let annihilator = null_space(m, &basis);
        let pivot_mask = basis.iter().fold(0u32, |acc, r| acc | leading_bit(*r));
        Subgroup2 {
            m,
            basis,
            annihilator,
            pivot_mask,
        }
    }

    /// The span of `gens`.
    pub fn from_generators(m: usize, gens: impl IntoIterator<Item = u32>) -> Result<Self> {
        check_z2_dim(m)?;
        let gens = gens.into_iter().collect::<Vec<_>>();
        if let Some(g) = gens.iter().find(|&&g| u64::from(g) >= z2_order(m)) {
            return Err(Error::invalid(format!("generator {g} out of range for Z_2^{m}")));
        }
        Ok(Self::build(m, rref(gens)))
    }

    /// `{x : r.x = 0 for all r in chars}`.
    pub fn from_annihilator(m: usize, chars: impl IntoIterator<Item = u32>) -> Result<Self> {
        check_z2_dim(m)?;
        let chars = chars.into_iter().collect::<Vec<_>>();
        if let Some(g) = chars.iter().find(|&&g| u64::from(g) >= z2_order(m)) {
            return Err(Error::invalid(format!("character {g} out of range for Z_2^{m}")));
        }
        let ann = rref(chars);
        Ok(Self::build(m, null_space(m, &ann)))
    }

    pub fn whole(m: usize) -> Self {
        Self::from_generators(m, (0..m).map(|i| 1u32 << i)).expect("valid dimension")
    }

    pub fn trivial(m: usize) -> Self {
        Self::build(m, Vec::new())
    }

    pub fn ambient_m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[u32] {
        &self.basis
    }

    pub fn annihilator(&self) -> &[u32] {
        &self.annihilator
    }

    pub fn order(&self) -> u64 {
        1u64 << self.dim()
    }

    pub fn index(&self) -> u64 {
        1u64 << (self.m - self.dim())
    }

    /// `P_H(H') = |H'| / |H|`.
    pub fn density(&self) -> Rational {
        pow2(self.dim() as i64 - self.m as i64)
    }

    pub fn contains(&self, x: u32) -> bool {
        self.annihilator.iter().all(|&r| !dot2(r, x))
    }

    /// Coordinates of `x` in the RREF basis, or `None` if `x` is outside.
    ///
    /// Coordinate 0 belongs to the basis vector with the highest pivot, so
    /// the map preserves lexicographic order.
    pub fn coords(&self, x: u32) -> Option<u32> {
        if !self.contains(x) {
            return None;
        }
        let d = self.dim();
        let mut c = 0u32;
        for (k, b) in self.basis.iter().enumerate() {
            if x & leading_bit(*b) != 0 {
                c |= 1 << (d - 1 - k);
            }
        }
        Some(c)
    }

    pub fn embed(&self, c: u32) -> u32 {
        let d = self.dim();
        let mut x = 0u32;
        for (k, b) in self.basis.iter().enumerate() {
            if c & (1 << (d - 1 - k)) != 0 {
                x ^= b;
            }
        }
        x
    }

    /// Members in increasing order.
    pub fn members(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.order() as u32).map(|c| self.embed(c))
    }

    /// The lexicographically least element of `x + H'`.
    pub fn coset_rep(&self, mut x: u32) -> u32 {
        for b in &self.basis {
            if x & leading_bit(*b) != 0 {
                x ^= b;
            }
        }
        x
    }

    /// Least representatives of all cosets, in increasing order.
    pub fn coset_reps(&self) -> Vec<u32> {
        (0..z2_order(self.m) as u32)
            .filter(|x| x & self.pivot_mask == 0)
            .collect()
    }

    /// The lexicographically least element outside `H'`, if any.
    pub fn least_outside(&self) -> Option<u32> {
        (0..z2_order(self.m) as u32).find(|&x| !self.contains(x))
    }

    /// Maps a subgroup given in the coordinates of `self` into the ambient
    /// group of `self`.
    pub fn lift(&self, inner: &Subgroup2) -> Result<Subgroup2> {
        if inner.ambient_m() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: inner.ambient_m(),
            });
        }
        Subgroup2::from_generators(self.m, inner.basis().iter().map(|&b| self.embed(b)))
    }

    pub fn is_subgroup_of(&self, other: &Subgroup2) -> bool {
        self.m == other.m && self.basis.iter().all(|&b| other.contains(b))
    }
}

/// `{γ}^⊥`, the index-2 subgroup cut out by a nonzero character.
pub fn subgroup_from_character(m: usize, gamma: u32) -> Result<Subgroup2> {
    if gamma == 0 {
        return Err(Error::invalid("the trivial character has no index-2 kernel"));
    }
    Subgroup2::from_annihilator(m, [gamma])
}

/// Every subspace of `F_2^m`, ordered by dimension and then by RREF basis.
pub fn enumerate_subgroups(m: usize, cap: usize) -> Result<Vec<Subgroup2>> {
    if m > cap {
        return Err(Error::CapExceeded {
            what: "subgroup enumeration dimension",
            value: m,
            cap,
        });
    }
    let mut out = Vec::new();
    for k in 0..=m {
        // choose pivot positions (as a bitmask with k ones), then the free
        // entries below each pivot that are not themselves pivot columns
        for pivots in 0u32..(1u32 << m) {
            if pivots.count_ones() as usize != k {
                continue;
            }
            let pivot_list: Vec<u32> = (0..m as u32).rev().filter(|j| pivots >> j & 1 == 1).collect();
            let free_slots: Vec<Vec<u32>> = pivot_list
                .iter()
                .map(|&p| (0..p).filter(|j| pivots >> j & 1 == 0).collect())
                .collect();
            let total_free: usize = free_slots.iter().map(Vec::len).sum();
            for fill in 0u64..(1u64 << total_free) {
                let mut bit = 0;
                let mut rows = Vec::with_capacity(k);
                for (p, slots) in pivot_list.iter().zip(&free_slots) {
                    let mut row = 1u32 << p;
                    for &j in slots {
                        if fill >> bit & 1 == 1 {
                            row |= 1 << j;
                        }
                        bit += 1;
                    }
                    rows.push(row);
                }
                out.push(Subgroup2::build(m, rows));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// A family `(A_h)_{h in H}` of subsets of `H = Z_2^m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Family {
    m: usize,
    fibres: Vec<Z2Set>,
}

impl Family {
    pub fn new(m: usize, fibres: Vec<Z2Set>) -> Result<Self> {
        check_z2_dim(m)?;
        if fibres.len() as u64 != z2_order(m) {
            return Err(Error::invalid(format!(
                "a family on Z_2^{m} needs {} fibres, got {}",
                z2_order(m),
                fibres.len()
            )));
        }
        if let Some(f) = fibres.iter().find(|f| f.ambient_m() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: f.ambient_m(),
            });
        }
        Ok(Family { m, fibres })
    }

    pub fn empty(m: usize) -> Result<Self> {
        let e = Z2Set::empty(m)?;
        Self::new(m, vec![e; z2_order(m) as usize])
    }

    pub fn full(m: usize) -> Result<Self> {
        let f = Z2Set::full(m)?;
        Self::new(m, vec![f; z2_order(m) as usize])
    }

    pub fn ambient_m(&self) -> usize {
        self.m
    }

    pub fn group_order(&self) -> u64 {
        z2_order(self.m)
    }

    pub fn fibre(&self, h: u32) -> &Z2Set {
        &self.fibres[h as usize]
    }

    pub fn fibres(&self) -> &[Z2Set] {
        &self.fibres
    }

    pub fn fibre_sizes(&self) -> Vec<u64> {
        self.fibres.iter().map(|f| f.len() as u64).collect()
    }

    pub fn total_members(&self) -> u64 {
        self.fibres.iter().map(|f| f.len() as u64).sum()
    }

    /// `f(h) = P_H(A_h)`.
    pub fn density_fn(&self, h: u32) -> Rational {
        self.fibres[h as usize].density()
    }

    /// `P_H(family) = E_h f(h)`.
    pub fn density(&self) -> Rational {
        let q = self.group_order();
        ratio(self.total_members(), q * q)
    }

    pub fn support(&self) -> Z2Set {
        Z2Set::collect(
            self.m,
            (0..self.group_order() as u32).filter(|&h| !self.fibres[h as usize].is_empty()),
        )
        .expect("support in range")
    }

    /// The `Z_4^m` set whose fibre decomposition is this family.
    pub fn to_z4(&self) -> Result<Z4Set> {
        let n = self.m;
        let codes = self
            .fibres
            .iter()
            .enumerate()
            .flat_map(|(h, f)| f.members().map(move |a| join4(h as u32, a, n)))
            .collect::<Vec<_>>();
        Z4Set::from_codes(n, codes)
    }
}

/// Splits `A ⊂ Z_4^n` into its fibres over the cosets of `ker 2`, each
/// translated into `ker 2 ≅ Z_2^n` by the canonical section.
pub fn fibre_decompose(a: &Z4Set) -> Family {
    let n = a.ambient_n();
    let mut fibres = vec![FixedBitSet::with_capacity(z2_order(n) as usize); z2_order(n) as usize];
    for x in a.members() {
        let (h, low) = split4(x, n);
        fibres[h as usize].insert(low as usize);
    }
    Family {
        m: n,
        fibres: fibres.into_iter().map(|bits| Z2Set { m: n, bits }).collect(),
    }
}

#[derive(Serialize, Deserialize)]
struct Z4SetRepr {
    n: usize,
    members: Vec<u32>,
}

impl Serialize for Z4Set {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Z4SetRepr {
            n: self.n,
            members: self.members().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Z4Set {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = Z4SetRepr::deserialize(d)?;
        Z4Set::from_codes(r.n, r.members).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct Z2SetRepr {
    m: usize,
    members: Vec<u32>,
}

impl Serialize for Z2Set {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Z2SetRepr {
            m: self.m,
            members: self.members().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Z2Set {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = Z2SetRepr::deserialize(d)?;
        Z2Set::from_codes(r.m, r.members).map_err(serde::de::Error::custom)
    }
}

/// Families travel as `{"m": m, "fibres": [[members of A_0], [members of A_1], ...]}`.
#[derive(Serialize, Deserialize)]
struct FamilyRepr {
    m: usize,
    fibres: Vec<Vec<u32>>,
}

impl Serialize for Family {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FamilyRepr {
            m: self.m,
            fibres: self.fibres.iter().map(|f| f.members().collect()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = FamilyRepr::deserialize(d)?;
        let fibres = r
            .fibres
            .into_iter()
            .map(|f| Z2Set::from_codes(r.m, f))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        Family::new(r.m, fibres).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn section_examples() {
        let y = ElemZ4::from_digits(&[0, 0, 0]).unwrap();
        assert_eq!(section_t(y).unwrap().digits(), vec![0, 0, 0]);
        let y = ElemZ4::from_digits(&[2, 0, 2]).unwrap();
        assert_eq!(section_t(y).unwrap().digits(), vec![1, 0, 1]);
        assert!(section_t(ElemZ4::from_digits(&[1, 0]).unwrap()).is_err());
    }

    #[test]
    fn section_inverts_doubling_exhaustively() {
        for n in 0..=4 {
            for code in 0..z4_order(n) as u32 {
                let y = ElemZ4::new(n, code).unwrap();
                if !y.in_image_of_two() {
                    continue;
                }
                assert_eq!(section_t(y).unwrap().double(), y);
            }
        }
    }

    #[test]
    fn swar_arithmetic_matches_digitwise() {
        let n = 3;
        for a in 0..64u32 {
            for b in 0..64u32 {
                let da = ElemZ4::new(n, a).unwrap().digits();
                let db = ElemZ4::new(n, b).unwrap().digits();
                let sum: Vec<u8> = da.iter().zip(&db).map(|(x, y)| (x + y) % 4).collect();
                assert_eq!(add4(a, b), ElemZ4::from_digits(&sum).unwrap().code());
                let dif: Vec<u8> = da.iter().zip(&db).map(|(x, y)| (4 + x - y) % 4).collect();
                assert_eq!(sub4(a, b), ElemZ4::from_digits(&dif).unwrap().code());
            }
            let dbl: Vec<u8> = ElemZ4::new(n, a)
                .unwrap()
                .digits()
                .iter()
                .map(|x| (2 * x) % 4)
                .collect();
            assert_eq!(double4(a), ElemZ4::from_digits(&dbl).unwrap().code());
        }
    }

    #[test]
    fn doubling_image_equals_kernel() {
        let image: Vec<u32> = {
            let mut v: Vec<u32> = (0..16).map(double4).collect();
            v.sort();
            v.dedup();
            v
        };
        let kernel: Vec<u32> = (0..16).filter(|&x| double4(x) == 0).collect();
        assert_eq!(image, kernel);
    }

    #[test]
    fn character_subgroup_examples() {
        let h = subgroup_from_character(1, 1).unwrap();
        assert_eq!(h.members().collect::<Vec<_>>(), vec![0]);
        assert_eq!(h.index(), 2);

        let gamma = ElemZ2::from_bits(&[1, 1, 0]).unwrap().code();
        let h = subgroup_from_character(3, gamma).unwrap();
        assert_eq!(h.order(), 4);
        for x in 0..8 {
            assert_eq!(h.contains(x), !dot2(gamma, x));
            assert_eq!(h.members().any(|y| y == x), !dot2(gamma, x));
        }
        assert!(subgroup_from_character(3, 0).is_err());
    }

    #[test]
    fn coordinates_are_order_preserving() {
        let h = Subgroup2::from_generators(5, [0b10110, 0b01011, 0b00111]).unwrap();
        let members: Vec<u32> = h.members().collect();
        assert!(members.windows(2).all(|w| w[0] < w[1]));
        for (c, &x) in members.iter().enumerate() {
            assert_eq!(h.coords(x), Some(c as u32));
        }
    }

    #[test]
    fn coset_reps_are_least() {
        let h = Subgroup2::from_generators(4, [0b1010, 0b0110]).unwrap();
        let reps = h.coset_reps();
        assert_eq!(reps.len() as u64, h.index());
        for x in 0..16u32 {
            let rep = h.coset_rep(x);
            let least = h.members().map(|y| y ^ x).min().unwrap();
            assert_eq!(rep, least);
            assert!(reps.contains(&rep));
        }
    }

    #[test]
    fn subgroup_counts() {
        assert_eq!(enumerate_subgroups(1, 5).unwrap().len(), 2);
        assert_eq!(enumerate_subgroups(2, 5).unwrap().len(), 5);
        assert_eq!(enumerate_subgroups(4, 5).unwrap().len(), 67);
        assert!(enumerate_subgroups(6, 5).is_err());
    }

    #[test]
    fn fibre_examples() {
        let full = Z4Set::full(2).unwrap();
        let fam = fibre_decompose(&full);
        assert!(fam.fibres().iter().all(|f| f.len() == 4));

        let point = Z4Set::from_codes(1, [0]).unwrap();
        let fam = fibre_decompose(&point);
        assert_eq!(fam.fibre(0).members().collect::<Vec<_>>(), vec![0]);
        assert!(fam.fibre(1).is_empty());
        assert_eq!(fam.density_fn(0), crate::rational::rat(1, 2));
        assert_eq!(fam.density_fn(1), crate::rational::rat(0, 1));
    }

    #[test]
    fn duplicate_members_rejected() {
        assert!(Z4Set::from_codes(1, [1, 1]).is_err());
        assert!(Z2Set::from_codes(2, [3, 3]).is_err());
    }
}
