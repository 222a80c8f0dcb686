//! Finding a subgroup coset on which a set is dense and Fourier-uniform.
//!
//! The existence statement is realised by exhaustive search over all
//! subgroups of `Z_2^m` (small `m` only), followed by the usual `L^∞`
//! increment loop until the restricted set has no large nontrivial
//! coefficient.

use std::cmp::Ordering;

use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caps::Caps;
use crate::error::{Error, Result};
use crate::group::{enumerate_subgroups, Subgroup2, Z2Set};
use crate::harmonic::{indicator_wht, sup_nontrivial_int, RealFn2};
use crate::increment::linf_increment;
use crate::rational::{ceil_to_int, int, ln_upper, ratio, serde_rational, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BsgResult {
    /// `H'` in the ambient group of `A`.
    pub subgroup: Subgroup2,
    pub shift: u32,
    /// `(1_A ∗ P_{H'})(x) = |A ∩ (x + H')| / |H'|`.
    #[serde(with = "serde_rational")]
    pub local_density: Rational,
    /// `sup_{γ ≠ 0} |1_{A'}^(γ)|` over the dual of `H'`.
    #[serde(with = "serde_rational")]
    pub sup_coeff: Rational,
    /// `sup_coeff / P_{H'}(A')`, zero when `A'` is empty.
    #[serde(with = "serde_rational")]
    pub uniformity: Rational,
}

impl BsgResult {
    pub fn at(a: &Z2Set, subgroup: Subgroup2, shift: u32) -> Self {
        let restricted = a.restrict_to_coset(&subgroup, shift);
        let local_density = restricted.density();
        let sup_coeff = if subgroup.dim() == 0 {
            Rational::zero()
        } else {
            let (_, v) = sup_nontrivial_int(&indicator_wht(&restricted)).expect("dim ≥ 1");
            ratio(v as u64, subgroup.order())
        };
        let uniformity = if local_density.is_zero() {
            Rational::zero()
        } else {
            &sup_coeff / &local_density
        };
        BsgResult {
            subgroup,
            shift,
            local_density,
            sup_coeff,
            uniformity,
        }
    }

    /// `A' = A ∩ (x + H') - x` in the coordinates of `H'`.
    pub fn restricted(&self, a: &Z2Set) -> Z2Set {
        a.restrict_to_coset(&self.subgroup, self.shift)
    }
}

/// Higher density first, then larger subgroup, then canonical subgroup
/// order, then the least shift.
fn preference(a: &(Rational, &Subgroup2, u32), b: &(Rational, &Subgroup2, u32)) -> Ordering {
    b.0.cmp(&a.0)
        .then(b.1.dim().cmp(&a.1.dim()))
        .then(a.1.cmp(b.1))
        .then(a.2.cmp(&b.2))
}

/// Exhaustive search for `(H', x)` with `P(H') ≥ min_subgroup_density`
/// maximising `(1_A ∗ P_{H'})(x)`, subject to that value being at least
/// `c/2`.
pub fn bsg_oracle(a: &Z2Set, c: &Rational, min_subgroup_density: &Rational, caps: &Caps) -> Result<Option<BsgResult>> {
    let m = a.ambient_m();
    caps.check_subgroup(m)?;
    let subgroups = enumerate_subgroups(m, caps.subgroup_m)?;
    let threshold = c / int(2);
    let best = subgroups
        .par_iter()
        .filter(|h| &h.density() >= min_subgroup_density)
        .filter_map(|h| {
            h.coset_reps()
                .into_iter()
                .map(|x| (ratio(a.count_in_coset(h, x) as u64, h.order()), h, x))
                .filter(|cand| cand.0 >= threshold)
                .min_by(preference)
        })
        .min_by(preference);
    Ok(best.map(|(_, h, x)| BsgResult::at(a, h.clone(), x)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformStep {
    /// Witness character in the coordinates of the current subgroup.
    pub gamma: u32,
    #[serde(with = "serde_rational")]
    pub density_before: Rational,
    #[serde(with = "serde_rational")]
    pub density_after: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Uniformized {
    pub result: BsgResult,
    pub steps: Vec<UniformStep>,
    pub step_bound: u64,
}

/// `⌈ε⁻¹ ln α₀⁻¹⌉ + 1`, logarithm rounded up.
pub fn uniformize_bound(epsilon: &Rational, alpha0: &Rational, bits: u32) -> u64 {
    if alpha0.is_zero() {
        return 1;
    }
    let b = ceil_to_int(&(ln_upper(&alpha0.recip(), bits) / epsilon));
    u64::try_from(b).unwrap_or(u64::MAX).saturating_add(1)
}

/// While `sup_{γ≠0} |1_{A_i}^(γ)| > ε P(A_i)`, pass to the denser coset of
/// the witness kernel. Each pass multiplies the density by at least
/// `1 + ε`.
pub fn uniformize(a: &Z2Set, epsilon: &Rational, inner: &BsgResult, bits: u32) -> Result<Uniformized> {
    if !epsilon.is_positive() || epsilon > &int(1) {
        return Err(Error::precondition("ε must lie in (0, 1]"));
    }
    let bound = uniformize_bound(epsilon, &inner.local_density, bits);
    let mut subgroup = inner.subgroup.clone();
    let mut shift = inner.shift;
    let mut steps = Vec::new();
    loop {
        let current = a.restrict_to_coset(&subgroup, shift);
        let density = current.density();
        if subgroup.dim() == 0 {
            break;
        }
        let w = indicator_wht(&current);
        let (gamma, mag) = sup_nontrivial_int(&w).expect("dim ≥ 1");
        let coeff = ratio(mag as u64, subgroup.order());
        if coeff <= epsilon * &density {
            break;
        }
        let lin = linf_increment(&RealFn2::indicator(&current), gamma)?;
        let next = subgroup.lift(&lin.subgroup)?;
        let next_shift = shift ^ subgroup.embed(lin.coset);
        let after = a.restrict_to_coset(&next, next_shift).density();
        if after != lin.value {
            return Err(Error::mismatch(
                "uniformize",
                "restricted density differs from coset average",
            ));
        }
        if after < &density * (int(1) + epsilon) {
            return Err(Error::mismatch(
                "uniformize",
                format!("density grew from {density} to {after}, less than a factor 1 + ε"),
            ));
        }
        steps.push(UniformStep {
            gamma,
            density_before: density,
            density_after: after,
        });
        if steps.len() as u64 > bound {
            return Err(Error::falsification(
                "uniformize",
                format!("more than ⌈ε⁻¹ ln α₀⁻¹⌉ + 1 = {bound} steps"),
                serde_json::json!({
                    "set": serde_json::to_value(a).unwrap_or_default(),
                    "epsilon": serde_rational::to_value(epsilon),
                }),
            ));
        }
        subgroup = next;
        shift = next_shift;
    }
    Ok(Uniformized {
        result: BsgResult::at(a, subgroup, shift),
        steps,
        step_bound: bound,
    })
}
