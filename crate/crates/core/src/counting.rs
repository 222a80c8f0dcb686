//! Progression counts, quadruple counts and additive energy.
//!
//! Every count is an integer. `Λ` is reported next to its raw count
//! `Λ·16^n`, which equals `Λ·|G|²` for `G = Z_4^n` and `Λ·|H|⁴` for a family on
//! `H = Z_2^n`.

use num_traits::Signed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caps::Caps;
use crate::error::{Error, Result};
use crate::group::{add4, double4, fibre_decompose, split4, sub4, z2_order, z4_order, Family, Z2Set, Z4Set};
use crate::harmonic::{dft4, indicator_wht, int_wht, sup_nontrivial_int};
use crate::rational::{ratio, serde_rational, Rational};

/// Above this dimension the direct quadruple recount is skipped inside
/// [`lambda_family`]; the transform path alone is used.
pub const QUAD_DIRECT_MAX_M: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMethod {
    Naive,
    Fourier,
    Fibre,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambdaReport {
    #[serde(with = "serde_rational")]
    pub lambda: Rational,
    pub raw_count: u128,
    pub method: LambdaMethod,
}

impl LambdaReport {
    fn new(raw_count: u128, dim: usize, method: LambdaMethod) -> Self {
        LambdaReport {
            lambda: raw_to_lambda(raw_count, dim),
            raw_count,
            method,
        }
    }
}

/// `16^dim`, the normaliser turning `Λ` into an integer count.
pub fn normalizer(dim: usize) -> u128 {
    1u128 << (4 * dim)
}

pub fn raw_to_lambda(raw: u128, dim: usize) -> Rational {
    Rational::new(raw.into(), normalizer(dim).into())
}

/// `#{(x, d) : x, x+d, x+2d ∈ A}` by enumerating pairs `(x, x+d)` in `A`.
pub fn lambda_naive(a: &Z4Set, caps: &Caps) -> Result<LambdaReport> {
    let n = a.ambient_n();
    caps.check_naive(n)?;
    let members: Vec<u32> = a.members().collect();
    let raw: u128 = members
        .par_iter()
        .map(|&x| members.iter().filter(|&&y| a.contains(sub4(add4(y, y), x))).count() as u128)
        .sum();
    Ok(LambdaReport::new(raw, n, LambdaMethod::Naive))
}

/// `Λ(A) = Σ_γ 1_A^(γ)² 1_A^(2γ)` over the dual of `Z_4^n`.
pub fn lambda_fourier(a: &Z4Set) -> Result<LambdaReport> {
    let n = a.ambient_n();
    let spec = dft4(a);
    let mut re: i128 = 0;
    let mut im: i128 = 0;
    for r in 0..a.group_order() as u32 {
        let (x, y) = spec.scaled(r);
        let (c, d) = spec.scaled(double4(r));
        let (x, y, c, d) = (x as i128, y as i128, c as i128, d as i128);
        let (sr, si) = (x * x - y * y, 2 * x * y);
        re += sr * c - si * d;
        im += sr * d + si * c;
    }
    if im != 0 {
        return Err(Error::mismatch(
            "lambda_fourier",
            format!("imaginary part {im} does not vanish"),
        ));
    }
    let den = z4_order(n) as i128;
    if re < 0 || re % den != 0 {
        return Err(Error::mismatch(
            "lambda_fourier",
            format!("real part {re} is not a non-negative multiple of 4^{n}"),
        ));
    }
    Ok(LambdaReport::new((re / den) as u128, n, LambdaMethod::Fourier))
}

/// `Λ(A)` through the fibre decomposition.
pub fn lambda_fibre(a: &Z4Set) -> Result<LambdaReport> {
    let mut report = lambda_family(&fibre_decompose(a))?;
    report.method = LambdaMethod::Fibre;
    Ok(report)
}

/// `#{(a, a', y, h) : a, a' ∈ A_h, y ∈ A_{a+a'+h}}`, counted directly.
pub fn quadruple_count(f: &Family) -> u128 {
    let sizes = f.fibre_sizes();
    f.fibres()
        .par_iter()
        .enumerate()
        .map(|(h, fib)| {
            let members: Vec<u32> = fib.members().collect();
            let mut acc = 0u128;
            for &a in &members {
                for &b in &members {
                    acc += sizes[(a ^ b ^ h as u32) as usize] as u128;
                }
            }
            acc
        })
        .sum()
}

/// The same count via `Σ_h Σ_γ W_h(γ)² W_c(γ) (-1)^{γ.h} / 2^m`, where `W_h`
/// is the unnormalised transform of fibre `h` and `c(x) = |A_x|`.
pub fn quadruple_count_wht(f: &Family) -> Result<u128> {
    let m = f.ambient_m();
    let sizes: Vec<i64> = f.fibre_sizes().into_iter().map(|s| s as i64).collect();
    let wc = int_wht(&sizes);
    let total: i128 = f
        .fibres()
        .par_iter()
        .enumerate()
        .map(|(h, fib)| {
            if fib.is_empty() {
                return 0i128;
            }
            let w = indicator_wht(fib);
            let mut acc = 0i128;
            for (g, (&wg, &cg)) in w.iter().zip(&wc).enumerate() {
                let term = (wg as i128) * (wg as i128) * (cg as i128);
                if crate::group::dot2(g as u32, h as u32) {
                    acc -= term;
                } else {
                    acc += term;
                }
            }
            acc
        })
        .sum();
    let den = z2_order(m) as i128;
    if total < 0 || total % den != 0 {
        return Err(Error::mismatch(
            "quadruple_count_wht",
            format!("transform sum {total} is not a non-negative multiple of 2^{m}"),
        ));
    }
    Ok((total / den) as u128)
}

/// `Λ(𝒜)` with the transform path and, for small `m`, the direct
/// quadruple recount; the two must agree.
pub fn lambda_family(f: &Family) -> Result<LambdaReport> {
    let m = f.ambient_m();
    let wht = quadruple_count_wht(f)?;
    if m <= QUAD_DIRECT_MAX_M {
        let direct = quadruple_count(f);
        if direct != wht {
            return Err(Error::mismatch(
                "lambda_family",
                format!("transform path {wht} != quadruple count {direct}"),
            ));
        }
    }
    Ok(LambdaReport::new(wht, m, LambdaMethod::Fibre))
}

/// `T(Z_4^n) = #{(x, d) : 2d = 0} = 8^n`.
pub fn trivial_count(n: usize) -> u128 {
    1u128 << (3 * n)
}

/// `#{(x, d) : 2d = 0}` by enumeration.
pub fn trivial_count_enumerated(n: usize) -> Result<u128> {
    cap_enumeration(n, 4)?;
    let q = z4_order(n) as u32;
    let kernel = (0..q).filter(|&d| double4(d) == 0).count() as u128;
    Ok(kernel * q as u128)
}

/// `#{(x, y, z) : x + z = 2y, and x = z or x = y or y = z}` by enumeration.
pub fn trivial_triples_enumerated(n: usize) -> Result<u128> {
    cap_enumeration(n, 3)?;
    let q = z4_order(n) as u32;
    let mut count = 0u128;
    for x in 0..q {
        for y in 0..q {
            let z = sub4(add4(y, y), x);
            if x == z || x == y || y == z {
                count += 1;
            }
        }
    }
    Ok(count)
}

fn cap_enumeration(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::CapExceeded {
            what: "enumeration dimension",
            value: n,
            cap,
        });
    }
    Ok(())
}

/// `#{(a, b) ∈ A² : a - b ∈ ker 2} = Σ_h |A_h|²`; the raw count of trivial
/// progressions inside `A`.
pub fn trivial_pair_count(a: &Z4Set) -> u128 {
    let n = a.ambient_n();
    let mut per_class = vec![0u128; z2_order(n) as usize];
    for x in a.members() {
        per_class[split4(x, n).0 as usize] += 1;
    }
    per_class.iter().map(|c| c * c).sum()
}

/// First `(x, d)` in lexicographic order with `2d ≠ 0` and
/// `x, x+d, x+2d ∈ A`.
pub fn has_proper_progression(a: &Z4Set) -> Option<(u32, u32)> {
    let q = a.group_order() as u32;
    a.members().find_map(|x| {
        (0..q)
            .filter(|&d| double4(d) != 0)
            .find(|&d| {
                let y = add4(x, d);
                a.contains(y) && a.contains(add4(y, d))
            })
            .map(|d| (x, d))
    })
}

pub fn is_proper_free(a: &Z4Set) -> bool {
    has_proper_progression(a).is_none()
}

/// `#{(a, b, c, d) ∈ B⁴ : a + b = c + d}`.
pub fn additive_energy(b: &Z2Set) -> u128 {
    let mut reps = vec![0u128; b.group_order() as usize];
    let members: Vec<u32> = b.members().collect();
    for &x in &members {
        for &y in &members {
            reps[(x ^ y) as usize] += 1;
        }
    }
    reps.iter().map(|r| r * r).sum()
}

/// `‖1_B ∗ 1_B‖²_{L²} = Σ_γ 1_B^(γ)⁴ = E(B)/|H|³`, cross-checked.
pub fn energy(b: &Z2Set) -> Result<Rational> {
    let m = b.ambient_m();
    let direct = additive_energy(b);
    let w = indicator_wht(b);
    let fourth: u128 = w.iter().map(|&v| (v as i128).pow(4) as u128).sum();
    if fourth != direct << m {
        return Err(Error::mismatch(
            "energy",
            format!("Σ W⁴ = {fourth} but 2^{m}·E = {}", direct << m),
        ));
    }
    Ok(Rational::new(direct.into(), (1u128 << (3 * m)).into()))
}

/// `f^(γ)` of the density function as integers over `|H|²`.
pub fn density_wht(f: &Family) -> Vec<i64> {
    let sizes: Vec<i64> = f.fibre_sizes().into_iter().map(|s| s as i64).collect();
    int_wht(&sizes)
}

/// `⟨τ_h(1_{A_h} ∗ 1_{A_h}), f⟩_{L²(H)} = Σ_{a,a' ∈ A_h} |A_{a+a'+h}| / |H|³`.
pub fn fibre_inner_product(f: &Family, h: u32) -> Rational {
    let sizes = f.fibre_sizes();
    let members: Vec<u32> = f.fibre(h).members().collect();
    let mut acc = 0u128;
    for &a in &members {
        for &b in &members {
            acc += sizes[(a ^ b ^ h) as usize] as u128;
        }
    }
    Rational::new(acc.into(), (1u128 << (3 * f.ambient_m())).into())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(with = "serde_rational")]
    pub alpha: Rational,
    #[serde(rename = "K", with = "serde_rational")]
    pub k: Rational,
    #[serde(with = "serde_rational")]
    pub sup_f_hat: Rational,
    pub sup_witness: Option<u32>,
    #[serde(with = "serde_rational")]
    pub mean_square: Rational,
}

pub fn diagnostics(f: &Family) -> Result<Diagnostics> {
    let m = f.ambient_m();
    let q = f.group_order();
    let alpha = f.density();
    if !alpha.is_positive() {
        return Err(Error::precondition("diagnostics need a family of positive density"));
    }
    let sq: u128 = f.fibre_sizes().iter().map(|&s| (s as u128) * (s as u128)).sum();
    let mean_square = Rational::new(sq.into(), (1u128 << (3 * m)).into());
    let k = &mean_square / (&alpha * &alpha);
    let (sup_witness, sup_f_hat) = match sup_nontrivial_int(&density_wht(f)) {
        Some((g, v)) => (Some(g), ratio(v as u64, q * q)),
        None => (None, Rational::from_integer(0.into())),
    };
    Ok(Diagnostics {
        alpha,
        k,
        sup_f_hat,
        sup_witness,
        mean_square,
    })
}

/// `Σ_{γ : 2γ = 0} 1_A^(γ)²` with the check that it is at least `α²`.
pub fn lev_sum(a: &Z4Set) -> Result<Rational> {
    let s = dft4(a).lev_sum()?;
    let alpha = a.density();
    if s < &alpha * &alpha {
        return Err(Error::mismatch(
            "lev_sum",
            format!("Σ over real characters {s} < α² = {}", &alpha * &alpha),
        ));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    #[test]
    fn full_and_point_sets() {
        let caps = Caps::default();
        for n in 1..=3 {
            let full = Z4Set::full(n).unwrap();
            assert_eq!(lambda_naive(&full, &caps).unwrap().lambda, int(1));
            assert_eq!(lambda_fourier(&full).unwrap().lambda, int(1));
            assert_eq!(lambda_fibre(&full).unwrap().lambda, int(1));
        }
        let point = Z4Set::from_codes(1, [0]).unwrap();
        let r = lambda_naive(&point, &caps).unwrap();
        assert_eq!(r.raw_count, 1);
        assert_eq!(r.lambda, rat(1, 16));
        assert_eq!(lambda_fourier(&Z4Set::empty(2).unwrap()).unwrap().raw_count, 0);
    }

    #[test]
    fn naive_cap_is_enforced() {
        let caps = Caps {
            naive_n: 1,
            ..Caps::default()
        };
        assert!(lambda_naive(&Z4Set::full(2).unwrap(), &caps).is_err());
    }

    #[test]
    fn trivial_counts() {
        assert_eq!(trivial_count(1), 8);
        assert_eq!(trivial_count(2), 64);
        for n in 1..=3 {
            assert_eq!(trivial_count_enumerated(n).unwrap(), trivial_count(n));
            assert_eq!(trivial_triples_enumerated(n).unwrap(), trivial_count(n));
        }
    }

    #[test]
    fn proper_progression_witnesses() {
        let a = Z4Set::from_codes(1, [0, 1, 2]).unwrap();
        assert_eq!(has_proper_progression(&a), Some((0, 1)));
        let b = Z4Set::from_codes(1, [0, 1]).unwrap();
        assert_eq!(has_proper_progression(&b), None);
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy(&Z2Set::full(3).unwrap()).unwrap(), int(1));
        // index-2 subgroup: E = |B|³, so ‖1_B ∗ 1_B‖² = (1/2)³ = 1/8
        let h = crate::group::subgroup_from_character(3, 0b110).unwrap();
        let b = Z2Set::from_subgroup(&h);
        assert_eq!(additive_energy(&b), 64);
        assert_eq!(energy(&b).unwrap(), rat(1, 8));
    }

    #[test]
    fn diagnostics_of_constant_family() {
        let f = Family::full(2).unwrap();
        let d = diagnostics(&f).unwrap();
        assert_eq!(d.k, int(1));
        assert_eq!(d.sup_f_hat, int(0));
        assert!(diagnostics(&Family::empty(2).unwrap()).is_err());
    }

    #[test]
    fn model_family_mean_square() {
        // f = δ·1_S with δ = 1/2, σ = 1/4 on Z_2^2
        let m = 2;
        let mut fibres = vec![Z2Set::empty(m).unwrap(); 4];
        fibres[1] = Z2Set::from_codes(m, [0, 3]).unwrap();
        let f = Family::new(m, fibres).unwrap();
        let d = diagnostics(&f).unwrap();
        assert_eq!(d.k, int(4));
    }

    #[test]
    fn fibre_inner_products_average_to_lambda() {
        let a = Z4Set::from_codes(2, [0, 1, 5, 6, 10, 15]).unwrap();
        let f = fibre_decompose(&a);
        let total: Rational = (0..4).map(|h| fibre_inner_product(&f, h)).sum();
        assert_eq!(total / int(4), lambda_family(&f).unwrap().lambda);
    }
}
