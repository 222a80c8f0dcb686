//! Density-increment steps on families, each returning a certificate.
//!
//! Ties are always broken towards the lexicographically least choice: the
//! subgroup itself before its other coset, the least character, the least
//! level index.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::certificate::{transport_floor, CertKind, IncrementCertificate};
use crate::counting::{diagnostics, lambda_family, quadruple_count};
use crate::error::{Error, Result};
use crate::group::{subgroup_from_character, Family, Subgroup2, Z2Set};
use crate::harmonic::{indicator_wht, sup_nontrivial_int, RealFn2};
use crate::rational::{bit_length, ceil_to_int, int, ln_upper, log2_ceil, pow2, powi, ratio, serde_rational, Rational};

fn rjson(x: &Rational) -> Value {
    serde_rational::to_value(x)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinfIncrement {
    pub subgroup: Subgroup2,
    /// `0` for `H'` itself, otherwise the least element outside `H'`.
    pub coset: u32,
    #[serde(with = "serde_rational")]
    pub value: Rational,
}

/// `max{(f ∗ P_{H'})(0), (f ∗ P_{H'})(h0)} = E f + |f^(γ)|` for `H' = {γ}^⊥`.
pub fn linf_increment(f: &RealFn2, gamma: u32) -> Result<LinfIncrement> {
    let m = f.ambient_m();
    if f.values().iter().any(|v| v.is_negative() || v > &Rational::one()) {
        return Err(Error::precondition("linf_increment needs f with values in [0, 1]"));
    }
    if u64::from(gamma) >= 1u64 << m {
        return Err(Error::invalid(format!("character {gamma} out of range for Z_2^{m}")));
    }
    let h = subgroup_from_character(m, gamma)?;
    let h0 = h.least_outside().expect("index-2 subgroup has a second coset");
    let inside = f.coset_average(&h, 0);
    let outside = f.coset_average(&h, h0);
    let (coset, value) = if inside >= outside { (0, inside) } else { (h0, outside) };
    let coeff: Rational = f
        .values()
        .iter()
        .enumerate()
        .map(|(x, v)| {
            if crate::group::dot2(gamma, x as u32) {
                -v
            } else {
                v.clone()
            }
        })
        .sum::<Rational>()
        / int(1i64 << m);
    let expected = f.mean() + coeff.abs();
    if value != expected {
        return Err(Error::mismatch(
            "linf_increment",
            format!("max coset average {value} != E f + |f^(γ)| = {expected}"),
        ));
    }
    Ok(LinfIncrement {
        subgroup: h,
        coset,
        value,
    })
}

/// `A'_{c} := A_{h1 + c} ∩ (x_c + H') - x_c` in the coordinates of `H'`.
pub(crate) fn restrict_family(f: &Family, h: &Subgroup2, h1: u32, shifts: &[u32]) -> Family {
    let fibres = (0..h.order() as u32)
        .map(|c| f.fibre(h1 ^ h.embed(c)).restrict_to_coset(h, shifts[c as usize]))
        .collect();
    Family::new(h.dim(), fibres).expect("restricted family is well formed")
}

/// Chooses, for an index-2 subgroup, the half of `set` with more members;
/// ties go to `H'`.
fn larger_half(set: &Z2Set, h: &Subgroup2, h0: u32) -> u32 {
    if set.count_in_coset(h, 0) >= set.count_in_coset(h, h0) {
        0
    } else {
        h0
    }
}

fn check_gamma(f: &Family, gamma: u32) -> Result<()> {
    if gamma == 0 {
        return Err(Error::invalid("γ must be a nontrivial character"));
    }
    if u64::from(gamma) >= f.group_order() {
        return Err(Error::invalid(format!("character {gamma} out of range")));
    }
    Ok(())
}

/// Simultaneous increment: every fibre moves to its denser half, then the
/// denser coset of fibre indices is kept. Gain `≥ E_h |1_{A_h}^(γ)|`.
pub fn fibre_increment(f: &Family, gamma: u32) -> Result<(Family, IncrementCertificate)> {
    check_gamma(f, gamma)?;
    let m = f.ambient_m();
    let h = subgroup_from_character(m, gamma)?;
    let h0 = h.least_outside().expect("index 2");
    let q = f.group_order();

    let x: Vec<u32> = f.fibres().iter().map(|a| larger_half(a, &h, h0)).collect();
    let b_size = |hh: u32| f.fibre(hh).count_in_coset(&h, x[hh as usize]) as u64;
    let mass = |rep: u32| h.members().map(|y| b_size(rep ^ y)).sum::<u64>();
    let h1 = if mass(0) >= mass(h0) { 0 } else { h0 };

    let shifts: Vec<u32> = (0..h.order() as u32).map(|c| x[(h1 ^ h.embed(c)) as usize]).collect();
    let after = restrict_family(f, &h, h1, &shifts);

    let abs_sum: i64 = f.fibres().iter().map(|a| indicator_wht(a)[gamma as usize].abs()).sum();
    let gain = ratio(abs_sum as u64, q * q);
    let mut params = BTreeMap::new();
    params.insert("mean_abs_coeff".into(), rjson(&gain));
    let cert = IncrementCertificate::build(
        CertKind::FibreSimultaneous,
        Some(gamma),
        h,
        h1,
        shifts,
        gain,
        params,
        f,
        &after,
    )?;
    Ok((after, cert))
}

/// Increment from the density function: keep the coset `h1 + H'` where `f`
/// is densest and move each of its fibres to its denser half. Gain
/// `≥ |f^(γ)|`.
pub fn density_fn_increment(f: &Family, gamma: u32) -> Result<(Family, IncrementCertificate)> {
    check_gamma(f, gamma)?;
    let m = f.ambient_m();
    let lin = linf_increment(&RealFn2::density_of(f), gamma)?;
    let h = lin.subgroup;
    let h0 = h.least_outside().expect("index 2");
    let h1 = lin.coset;
    let shifts: Vec<u32> = (0..h.order() as u32)
        .map(|c| larger_half(f.fibre(h1 ^ h.embed(c)), &h, h0))
        .collect();
    let after = restrict_family(f, &h, h1, &shifts);
    let gain = &lin.value - f.density();
    let mut params = BTreeMap::new();
    params.insert("abs_f_hat".into(), rjson(&gain));
    params.insert("m".into(), json!(m));
    let cert = IncrementCertificate::build(CertKind::DensityFn, Some(gamma), h, h1, shifts, gain, params, f, &after)?;
    Ok((after, cert))
}

/// If every fibre has density `0` or one common value `δ`, returns `(δ, S)`.
pub fn two_valued(f: &Family) -> Result<(Rational, Z2Set)> {
    let support = f.support();
    let sizes = f.fibre_sizes();
    let mut nonzero = sizes.iter().filter(|&&s| s > 0);
    let delta = match nonzero.next() {
        Some(&s) => s,
        None => return Ok((Rational::zero(), support)),
    };
    if sizes.iter().any(|&s| s != 0 && s != delta) {
        return Err(Error::precondition(
            "density function takes more than one nonzero value",
        ));
    }
    Ok((ratio(delta, f.group_order()), support))
}

#[derive(Clone, Debug, PartialEq)]
pub enum LargeL2Outcome {
    Floor {
        lambda: Rational,
        floor: Rational,
    },
    Step {
        family: Family,
        certificate: Box<IncrementCertificate>,
        gamma: u32,
        sigma: Rational,
        sigma_new: Rational,
        delta_new: Rational,
    },
}

/// One step for a family with `f = δ·1_S`: either `Λ ≥ δ³σ²/2`, or `S` has a
/// large coefficient and the family moves to the coset of `{γ}^⊥` where `S`
/// is densest, fibres trimmed to `⌈δ|H'|⌉` members.
pub fn large_l2_step(f: &Family) -> Result<LargeL2Outcome> {
    let (delta, s) = two_valued(f)?;
    let m = f.ambient_m();
    let lambda = lambda_family(f)?.lambda;
    let sigma = s.density();
    let floor = powi(&delta, 3) * &sigma * &sigma / int(2);
    if lambda >= floor {
        return Ok(LargeL2Outcome::Floor { lambda, floor });
    }
    let dump = || {
        json!({
            "family": serde_json::to_value(f).unwrap_or(Value::Null),
            "delta": rjson(&delta),
            "sigma": rjson(&sigma),
            "lambda": rjson(&lambda),
        })
    };
    if m == 0 {
        return Err(Error::falsification(
            "large_l2_step",
            "Λ below δ³σ²/2 on the trivial group",
            dump(),
        ));
    }
    let w = indicator_wht(&s);
    let (gamma, mag) = sup_nontrivial_int(&w).expect("m ≥ 1");
    let coeff = ratio(mag as u64, f.group_order());
    if coeff < &delta * &sigma / int(2) {
        return Err(Error::falsification(
            "large_l2_step",
            format!("Λ < δ³σ²/2 but sup |1_S^(γ)| = {coeff} < δσ/2"),
            dump(),
        ));
    }
    let lin = linf_increment(&RealFn2::indicator(&s), gamma)?;
    let h = lin.subgroup;
    let h0 = h.least_outside().expect("index 2");
    let h1 = lin.coset;
    let keep = ceil_to_int(&(&delta * int(h.order() as i64)));
    let keep = usize::try_from(keep).expect("fits");
    let mut shifts = Vec::with_capacity(h.order() as usize);
    let mut fibres = Vec::with_capacity(h.order() as usize);
    for c in 0..h.order() as u32 {
        let a = f.fibre(h1 ^ h.embed(c));
        let x = larger_half(a, &h, h0);
        let restricted = a.restrict_to_coset(&h, x);
        shifts.push(x);
        if restricted.is_empty() {
            fibres.push(restricted);
        } else if restricted.len() < keep {
            return Err(Error::falsification(
                "large_l2_step",
                format!("fibre {c} keeps {} < ⌈δ|H'|⌉ = {keep} members", restricted.len()),
                dump(),
            ));
        } else {
            fibres.push(restricted.least(keep));
        }
    }
    let after = Family::new(h.dim(), fibres)?;
    let (delta_new, s_new) = two_valued(&after)?;
    let sigma_new = s_new.density();
    let target = &sigma * (int(1) + &delta / int(2));
    if sigma_new < target {
        return Err(Error::falsification(
            "large_l2_step",
            format!("new support density {sigma_new} < σ(1 + δ/2) = {target}"),
            dump(),
        ));
    }
    let mut params = BTreeMap::new();
    params.insert("delta".into(), rjson(&delta));
    params.insert("delta_new".into(), rjson(&delta_new));
    params.insert("sigma".into(), rjson(&sigma));
    params.insert("sigma_new".into(), rjson(&sigma_new));
    params.insert("lambda".into(), rjson(&lambda));
    // δ' ≥ δ and σ' ≥ σ(1 + δ/2) give P(𝒜') ≥ δσ(1 + δ/2).
    let gain = &target * &delta - f.density();
    let certificate = IncrementCertificate::build(
        CertKind::LargeL2Step,
        Some(gamma),
        h,
        h1,
        shifts,
        gain,
        params,
        f,
        &after,
    )?;
    Ok(LargeL2Outcome::Step {
        family: after,
        certificate: Box::new(certificate),
        gamma,
        sigma,
        sigma_new,
        delta_new,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LargeL2Drive {
    pub final_family: Family,
    pub certificates: Vec<IncrementCertificate>,
    pub steps: usize,
    pub step_bound: u64,
    /// Floor on `Λ` of the final family.
    pub final_floor: Rational,
    /// The same floor transported back to the starting family.
    pub lambda_floor: Rational,
}

/// `⌈2δ^{-1} ln σ^{-1}⌉ + 1` with the logarithm rounded up.
pub fn large_l2_step_bound(delta: &Rational, sigma: &Rational, bits: u32) -> u64 {
    if sigma.is_zero() || delta.is_zero() {
        return 1;
    }
    let l = ln_upper(&sigma.recip(), bits);
    let b = ceil_to_int(&(int(2) / delta * l));
    u64::try_from(b).unwrap_or(u64::MAX).saturating_add(1)
}

/// Iterates [`large_l2_step`] until the floor branch fires.
pub fn large_l2_drive(f: &Family, bits: u32) -> Result<LargeL2Drive> {
    let (delta, s) = two_valued(f)?;
    let bound = large_l2_step_bound(&delta, &s.density(), bits);
    let mut current = f.clone();
    let mut certificates = Vec::new();
    loop {
        match large_l2_step(&current)? {
            LargeL2Outcome::Floor { floor, .. } => {
                let lambda_floor = transport_floor(&floor, f.ambient_m(), current.ambient_m());
                let counts: Vec<u128> = std::iter::once(quadruple_count(f))
                    .chain(certificates.iter().map(|c: &IncrementCertificate| c.after.raw_count))
                    .collect();
                if counts.windows(2).any(|w| w[0] < w[1]) {
                    return Err(Error::mismatch("large_l2_drive", "certificate chain is not monotone"));
                }
                return Ok(LargeL2Drive {
                    steps: certificates.len(),
                    final_family: current,
                    certificates,
                    step_bound: bound,
                    final_floor: floor,
                    lambda_floor,
                });
            }
            LargeL2Outcome::Step {
                family, certificate, ..
            } => {
                certificates.push(*certificate);
                if certificates.len() as u64 > bound {
                    return Err(Error::falsification(
                        "large_l2_drive",
                        format!("more than ⌈2δ⁻¹ ln σ⁻¹⌉ + 1 = {bound} steps"),
                        json!({"start": serde_json::to_value(f).unwrap_or(Value::Null)}),
                    ));
                }
                current = family;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DyadicSelection {
    pub level: u32,
    pub level_set: Z2Set,
    /// `2^{-(i+1)}`.
    pub delta: Rational,
    /// The trimmed fibre density `⌈2^{-(i+1)}|H|⌉ / |H|`.
    pub delta_trimmed: Rational,
    /// `ε = 1/(1 + b)` with `b` the bit length of `⌈K⌉`.
    pub epsilon: Rational,
    pub k: Rational,
    pub level_masses: Vec<Rational>,
    /// The averaged inequality with the constant `2ε⁻¹α^{-ε}`.
    pub band_bound_holds: bool,
    pub k_below_two: bool,
    pub subfamily: Family,
    pub certificate: IncrementCertificate,
}

/// Dyadic level sets `S_i = {2^{-(i+1)} ≤ f ≤ 2^{-i}}` for
/// `i ≤ ⌈log₂ α⁻¹⌉`; picks the `i` maximising `2^{-(2+ε)i} P(S_i)` and trims
/// fibres over `S_i` to `⌈2^{-(i+1)}|H|⌉` least members.
pub fn dyadic_select(f: &Family) -> Result<DyadicSelection> {
    let m = f.ambient_m();
    let q = f.group_order();
    let diag = diagnostics(f)?;
    let alpha = diag.alpha.clone();
    let k = diag.k.clone();
    let b = bit_length(&ceil_to_int(&k)) as u32;
    let e_den = 1 + b;
    let epsilon = Rational::new(1.into(), e_den.into());
    let top = log2_ceil(&alpha.recip()).max(0) as u32;

    let mut sets = Vec::new();
    for i in 0..=top {
        let lo = pow2(-(i as i64) - 1);
        let hi = pow2(-(i as i64));
        let members = (0..q as u32).filter(|&h| {
            let v = f.density_fn(h);
            lo <= v && v <= hi
        });
        sets.push(Z2Set::collect(m, members)?);
    }
    let masses: Vec<Rational> = sets.iter().map(|s| s.density()).collect();

    // 2^{-(2+ε)i} P(S_i), compared through its (1+b)-th power.
    let score = |i: u32| powi(&masses[i as usize], e_den) * pow2(-((2 * e_den as i64 + 1) * i as i64));
    let mut best = 0u32;
    for i in 1..=top {
        if score(i) > score(best) {
            best = i;
        }
    }

    // Σ_i 2^{-2i}P(S_i) ≥ 3‖f‖²/4 always holds.
    let lk: Rational = masses.iter().enumerate().map(|(i, p)| p * pow2(-2 * i as i64)).sum();
    if lk < int(3) * &diag.mean_square / int(4) {
        return Err(Error::mismatch(
            "dyadic_select",
            format!("level-set mass {lk} below 3‖f‖²/4"),
        ));
    }
    // (2ε⁻¹α^{-ε}) 2^{-(2+ε)i} P(S_i) ≥ 3‖f‖²/4  ⇔  X^{1+b} ≥ α 2^i with
    // X = 2ε⁻¹ 2^{-2i} P(S_i) · 4 / (3‖f‖²).
    let x = int(2) * int(e_den as i64) * pow2(-2 * best as i64) * &masses[best as usize] * int(4)
        / (int(3) * &diag.mean_square);
    let band_bound_holds = powi(&x, e_den) >= &alpha * pow2(best as i64);

    let delta = pow2(-(best as i64) - 1);
    let keep = usize::try_from(ceil_to_int(&(&delta * int(q as i64)))).expect("fits");
    let level_set = sets[best as usize].clone();
    let fibres = (0..q as u32)
        .map(|h| {
            if level_set.contains(h) {
                f.fibre(h).least(keep)
            } else {
                Z2Set::empty(m).expect("valid")
            }
        })
        .collect();
    let subfamily = Family::new(m, fibres)?;
    let delta_trimmed = ratio(keep as u64, q);
    let mut params = BTreeMap::new();
    params.insert("level".into(), json!(best));
    params.insert("epsilon".into(), rjson(&epsilon));
    params.insert("K".into(), rjson(&k));
    params.insert("delta".into(), rjson(&delta));
    params.insert("band_bound_holds".into(), json!(band_bound_holds));
    let gain = subfamily.density() - f.density();
    let certificate = IncrementCertificate::build(
        CertKind::DyadicTrim,
        None,
        Subgroup2::whole(m),
        0,
        (0..q as u32).map(|_| 0).collect(),
        gain,
        params,
        f,
        &subfamily,
    )?;
    Ok(DyadicSelection {
        level: best,
        level_set,
        delta,
        delta_trimmed,
        epsilon,
        k_below_two: k < int(2),
        k,
        level_masses: masses,
        band_bound_holds,
        subfamily,
        certificate,
    })
}
