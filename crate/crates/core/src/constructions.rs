//! Sets in `Z_4^n` without proper three-term progressions.
//!
//! A set is proper-progression-free exactly when, for every fibre index `h`
//! and every pair `a ≠ a'` in `A_h`, the fibre `A_{h+a+a'}` is empty. So a
//! free set is a choice of support `P ⊂ Z_2^n` together with, for each
//! `h ∈ P`, a fibre whose pairwise differences avoid `h + P`. Fibres do not
//! interact once `P` is fixed, which makes the maximum search a search over
//! supports only.

use serde::{Deserialize, Serialize};

use crate::caps::Caps;
use crate::counting::{has_proper_progression, is_proper_free};
use crate::error::{Error, Result};
use crate::group::{z2_order, Family, Z2Set, Z4Set, MAX_Z4_DIM};
use crate::rational::{ln_bounds, rat, to_f64, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    A0,
    Product,
    Moser,
    Search,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstructionRecord {
    pub set: Z4Set,
    pub origin: Origin,
    pub verified_free: bool,
    pub size: usize,
    /// For search results: `true` when the size is a proven maximum.
    pub proven_maximum: Option<bool>,
}

impl ConstructionRecord {
    pub fn new(set: Z4Set, origin: Origin) -> Self {
        ConstructionRecord {
            verified_free: is_proper_free(&set),
            size: set.len(),
            set,
            origin,
            proven_maximum: None,
        }
    }
}

const A0_ROWS: [[u8; 3]; 16] = [
    [0, 0, 0],
    [0, 0, 1],
    [0, 1, 0],
    [0, 1, 2],
    [0, 2, 1],
    [0, 2, 2],
    [1, 0, 0],
    [1, 0, 2],
    [1, 2, 0],
    [1, 2, 2],
    [2, 0, 1],
    [2, 0, 2],
    [2, 1, 0],
    [2, 1, 2],
    [2, 2, 0],
    [2, 2, 1],
];

/// The 16-point progression-free set in `Z_4^3`.
pub fn a0() -> Z4Set {
    let rows: Vec<&[u8]> = A0_ROWS.iter().map(|r| &r[..]).collect();
    Z4Set::from_digit_rows(&rows).expect("A_0 is well formed")
}

/// `A × B ⊂ Z_4^{a+b}`, coordinates of `A` first.
pub fn product(a: &Z4Set, b: &Z4Set) -> Result<Z4Set> {
    let na = a.ambient_n();
    let nb = b.ambient_n();
    if na + nb > MAX_Z4_DIM {
        return Err(Error::CapExceeded {
            what: "product dimension",
            value: na + nb,
            cap: MAX_Z4_DIM,
        });
    }
    let codes: Vec<u32> = a
        .members()
        .flat_map(|x| b.members().map(move |y| (x << (2 * nb)) | y))
        .collect();
    Z4Set::from_codes(na + nb, codes)
}

/// `S_n`: points of `{0,1,2}^n` with exactly `⌊n/3⌋` coordinates equal to 1.
pub fn moser(n: usize) -> Result<Z4Set> {
    if n == 0 {
        return Err(Error::invalid("moser sets need n ≥ 1"));
    }
    if n > MAX_Z4_DIM {
        return Err(Error::CapExceeded {
            what: "moser dimension",
            value: n,
            cap: MAX_Z4_DIM,
        });
    }
    let ones = n / 3;
    let mut codes = Vec::new();
    for t in 0..3u32.pow(n as u32) {
        let mut rest = t;
        let mut code = 0u32;
        let mut count = 0;
        for lane in 0..n {
            let digit = rest % 3;
            rest /= 3;
            count += usize::from(digit == 1);
            code |= digit << (2 * lane);
        }
        if count == ones {
            codes.push(code);
        }
    }
    Z4Set::from_codes(n, codes)
}

/// `C(n, ⌊n/3⌋) · 2^{n - ⌊n/3⌋}`.
pub fn moser_size(n: usize) -> u128 {
    let k = n / 3;
    let mut binom = 1u128;
    for i in 0..k {
        binom = binom * (n - i) as u128 / (i + 1) as u128;
    }
    binom << (n - k)
}

/// The fibre criterion for freeness.
pub fn is_free_family(f: &Family) -> bool {
    f.fibres().iter().enumerate().all(|(h, fib)| {
        let members: Vec<u32> = fib.members().collect();
        members
            .iter()
            .enumerate()
            .all(|(i, &a)| members[i + 1..].iter().all(|&b| f.fibre(a ^ b ^ h as u32).is_empty()))
    })
}

/// `true` if no single added point keeps `a` free.
pub fn is_maximal_free(a: &Z4Set) -> Result<bool> {
    for x in 0..a.group_order() as u32 {
        if !a.contains(x) && is_proper_free(&a.with_member(x)?) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Lexicographically least largest `B ∋ 0` with `b + b' ∈ allowed` for
/// all distinct `b, b' ∈ B`.
fn best_fibre(n: usize, allowed: u32) -> Vec<u32> {
    let cand: Vec<u32> = (1..z2_order(n) as u32).filter(|d| allowed >> d & 1 == 1).collect();
    let mut best: Vec<u32> = vec![0];
    for mask in 1u32..(1 << cand.len()) {
        if mask.count_ones() as usize + 1 < best.len() {
            continue;
        }
        let chosen: Vec<u32> = (0..cand.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| cand[i])
            .collect();
        let ok = chosen
            .iter()
            .enumerate()
            .all(|(i, &a)| chosen[i + 1..].iter().all(|&b| allowed >> (a ^ b) & 1 == 1));
        if !ok {
            continue;
        }
        let mut set = vec![0];
        set.extend(chosen);
        if set.len() > best.len() || (set.len() == best.len() && set < best) {
            best = set;
        }
    }
    best
}

/// Largest proper-progression-free set in `Z_4^n`, by exhaustive search over
/// fibre supports. The result is always a proven maximum.
pub fn max_free_search(n: usize, caps: &Caps) -> Result<ConstructionRecord> {
    caps.check_search(n)?;
    if n == 0 {
        return Err(Error::invalid("search needs n ≥ 1"));
    }
    let q = z2_order(n) as u32;
    let mut best: Option<(usize, Vec<Vec<u32>>)> = None;
    for pattern in 1u32..(1u32 << q) {
        let fibres: Vec<Vec<u32>> = (0..q)
            .map(|h| {
                if pattern >> h & 1 == 0 {
                    return Vec::new();
                }
                let allowed = (0..q)
                    .filter(|&d| d != 0 && pattern >> (h ^ d) & 1 == 0)
                    .fold(0u32, |acc, d| acc | 1 << d);
                best_fibre(n, allowed)
            })
            .collect();
        let size = fibres.iter().map(Vec::len).sum();
        if best.as_ref().is_none_or(|(s, _)| size > *s) {
            best = Some((size, fibres));
        }
    }
    let (_, fibres) = best.expect("at least one pattern");
    let family = Family::new(
        n,
        fibres
            .into_iter()
            .map(|f| Z2Set::from_codes(n, f))
            .collect::<Result<Vec<_>>>()?,
    )?;
    if !is_free_family(&family) {
        return Err(Error::mismatch(
            "max_free_search",
            "fibre criterion rejects the chosen set",
        ));
    }
    let set = family.to_z4()?;
    if let Some(w) = has_proper_progression(&set) {
        return Err(Error::mismatch(
            "max_free_search",
            format!("progression {w:?} in the chosen set"),
        ));
    }
    let mut record = ConstructionRecord::new(set, Origin::Search);
    record.proven_maximum = Some(true);
    Ok(record)
}

/// Rigorous bounds on `ln 3 / ln 4`.
pub fn log3_over_log4(bits: u32) -> (Rational, Rational) {
    let (l3, h3) = ln_bounds(&rat(3, 1), bits);
    let (l4, h4) = ln_bounds(&rat(4, 1), bits);
    (&l3 / &h4, &h3 / &l4)
}

/// `ln 3 / ln 4` rounded to three decimals, if the bounds pin it down.
pub fn log3_over_log4_rounded(bits: u32) -> Option<f64> {
    let (lo, hi) = log3_over_log4(bits);
    let a = (to_f64(&lo) * 1000.0).round();
    let b = (to_f64(&hi) * 1000.0).round();
    (a == b).then_some(a / 1000.0)
}
