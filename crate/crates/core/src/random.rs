//! Seeded random instances. Everything goes through `ChaCha8Rng`, so a seed
//! fixes the instance on every platform.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::group::{z2_order, z4_order, Family, Z2Set, Z4Set};
use crate::harmonic::RealFn2;
use crate::rational::{ratio, Rational};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A uniformly random `k`-subset of `Z_4^n`.
pub fn z4_set_of_size(rng: &mut impl Rng, n: usize, k: usize) -> Result<Z4Set> {
    let order = z4_order(n) as usize;
    if k > order {
        return Err(Error::invalid(format!("cannot pick {k} of {order} elements")));
    }
    Z4Set::from_codes(n, sample(rng, order, k).into_iter().map(|x| x as u32))
}

/// Each element kept independently with probability `num/den`.
pub fn z4_set(rng: &mut impl Rng, n: usize, num: u32, den: u32) -> Result<Z4Set> {
    let codes: Vec<u32> = (0..z4_order(n) as u32).filter(|_| rng.gen_ratio(num, den)).collect();
    Z4Set::from_codes(n, codes)
}

/// A non-empty set with a density drawn uniformly from `1..=|G|` points.
pub fn nonempty_z4_set(rng: &mut impl Rng, n: usize) -> Result<Z4Set> {
    let order = z4_order(n) as usize;
    let k = rng.gen_range(1..=order);
    z4_set_of_size(rng, n, k)
}

pub fn z2_set_of_size(rng: &mut impl Rng, m: usize, k: usize) -> Result<Z2Set> {
    let order = z2_order(m) as usize;
    if k > order {
        return Err(Error::invalid(format!("cannot pick {k} of {order} elements")));
    }
    Z2Set::from_codes(m, sample(rng, order, k).into_iter().map(|x| x as u32))
}

pub fn z2_set(rng: &mut impl Rng, m: usize, num: u32, den: u32) -> Result<Z2Set> {
    let codes: Vec<u32> = (0..z2_order(m) as u32).filter(|_| rng.gen_ratio(num, den)).collect();
    Z2Set::from_codes(m, codes)
}

/// Every fibre an independent random subset with a random keep rate.
pub fn family(rng: &mut impl Rng, m: usize) -> Result<Family> {
    let q = z2_order(m) as usize;
    let fibres = (0..q)
        .map(|_| {
            let k = rng.gen_range(0..=q);
            z2_set_of_size(rng, m, k)
        })
        .collect::<Result<Vec<_>>>()?;
    Family::new(m, fibres)
}

/// A random family with at least one member.
pub fn nonempty_family(rng: &mut impl Rng, m: usize) -> Result<Family> {
    loop {
        let f = family(rng, m)?;
        if f.total_members() > 0 {
            return Ok(f);
        }
    }
}

/// Values `k/den` with `k` uniform in `0..=den`.
pub fn unit_fn(rng: &mut impl Rng, m: usize, den: u64) -> Result<RealFn2> {
    let values: Vec<Rational> = (0..z2_order(m)).map(|_| ratio(rng.gen_range(0..=den), den)).collect();
    RealFn2::new(m, values)
}

/// The regression corpus: `count` non-empty sets with `n` cycling through
/// `1..=n_max`.
pub fn corpus(seed: u64, count: usize, n_max: usize) -> Result<Vec<Z4Set>> {
    let mut r = rng(seed);
    (0..count).map(|i| nonempty_z4_set(&mut r, 1 + i % n_max)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_reproduce() {
        let a = corpus(7, 10, 3).unwrap();
        let b = corpus(7, 10, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| !s.is_empty()));
        assert_ne!(a, corpus(8, 10, 3).unwrap());
    }

    #[test]
    fn sizes_are_exact() {
        let mut r = rng(1);
        assert_eq!(z4_set_of_size(&mut r, 2, 6).unwrap().len(), 6);
        assert_eq!(z2_set_of_size(&mut r, 3, 5).unwrap().len(), 5);
        assert!(z2_set_of_size(&mut r, 1, 3).is_err());
    }
}
