//! Machine-checkable records of family steps.
//!
//! Every step that replaces a family `𝒜` on `H` by a family `𝒜'` on a
//! subgroup `H' ≤ H` has the same shape: a coset `h1 + H'` of fibre indices
//! and, for each new index `h'`, a shift `x_{h'}` with
//!
//! ```text
//! A'_{h'} + x_{h'} ⊂ A_{h1 + h'}
//! ```
//!
//! (elements of `A'_{h'}` are written in the coordinates of `H'`). Any such
//! embedding maps quadruples of `𝒜'` injectively to quadruples of `𝒜`, so
//! `|H|⁴Λ(𝒜) ≥ |H'|⁴Λ(𝒜')`. The verifier checks the embedding and that
//! integer inequality from scratch, plus the step's density claim.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::counting::quadruple_count;
use crate::error::{Error, Result};
use crate::group::{Family, Subgroup2};
use crate::rational::{serde_rational, Rational};

pub const CERTIFICATE_SCHEMA: u32 = 1;

/// Counts travel as JSON integers when they fit in 64 bits and as decimal
/// strings otherwise.
pub mod serde_count {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Small(u64),
        Big(String),
    }

    fn repr(x: u128) -> Repr {
        u64::try_from(x).map_or_else(|_| Repr::Big(x.to_string()), Repr::Small)
    }

    fn unrepr<E: serde::de::Error>(r: Repr) -> Result<u128, E> {
        match r {
            Repr::Small(x) => Ok(u128::from(x)),
            Repr::Big(s) => s.parse().map_err(|_| E::custom(format!("bad count {s:?}"))),
        }
    }

    pub fn serialize<S: Serializer>(x: &u128, s: S) -> Result<S::Ok, S::Error> {
        repr(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        unrepr(Repr::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(xs: &[u128], s: S) -> Result<S::Ok, S::Error> {
            xs.iter().map(|&x| repr(x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u128>, D::Error> {
            Vec::<Repr>::deserialize(d)?
                .into_iter()
                .map(unrepr::<D::Error>)
                .collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertKind {
    /// One index-2 step with per-fibre shifts (simultaneous increment).
    FibreSimultaneous,
    /// One index-2 step driven by the density function.
    DensityFn,
    /// One step of the `δ·1_S` iteration, fibres trimmed to a common size.
    LargeL2Step,
    /// Fibres restricted to a dyadic level set and trimmed; `H' = H`.
    DyadicTrim,
    /// Fibres moved onto one shared subgroup, trimmed to a common density.
    EnergyGrouping,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub m: usize,
    #[serde(with = "serde_rational")]
    pub density: Rational,
    /// `|H|⁴Λ`, the quadruple count.
    #[serde(with = "serde_count")]
    pub raw_count: u128,
    pub members: u64,
}

impl FamilySummary {
    pub fn of(f: &Family) -> Self {
        FamilySummary {
            m: f.ambient_m(),
            density: f.density(),
            raw_count: quadruple_count(f),
            members: f.total_members(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementCertificate {
    pub schema: u32,
    pub kind: CertKind,
    pub gamma: Option<u32>,
    /// `H'` inside the before-group.
    pub subgroup: Subgroup2,
    pub h1: u32,
    /// `x_{h'}` for each `h'` in `H'`, indexed by coordinates of `h'`.
    pub shift_table: Vec<u32>,
    /// Lower bound on `P_{H'}(𝒜') - P_H(𝒜)`; negative for trims.
    #[serde(with = "serde_rational")]
    pub claimed_gain: Rational,
    /// Step parameters recorded for the reader (`δ`, `ε`, thresholds...).
    pub params: BTreeMap<String, Value>,
    pub before: FamilySummary,
    pub after: FamilySummary,
    pub before_family: Family,
    pub after_family: Family,
}

impl IncrementCertificate {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        kind: CertKind,
        gamma: Option<u32>,
        subgroup: Subgroup2,
        h1: u32,
        shift_table: Vec<u32>,
        claimed_gain: Rational,
        params: BTreeMap<String, Value>,
        before: &Family,
        after: &Family,
    ) -> Result<Self> {
        let cert = IncrementCertificate {
            schema: CERTIFICATE_SCHEMA,
            kind,
            gamma,
            subgroup,
            h1,
            shift_table,
            claimed_gain,
            params,
            before: FamilySummary::of(before),
            after: FamilySummary::of(after),
            before_family: before.clone(),
            after_family: after.clone(),
        };
        cert.verify(0)?;
        Ok(cert)
    }

    /// Re-checks the certificate from its embedded families. `step` only
    /// labels the error.
    pub fn verify(&self, step: usize) -> Result<()> {
        let fail = |reason: String| Error::Certificate { step, reason };
        if self.schema != CERTIFICATE_SCHEMA {
            return Err(fail(format!("unknown certificate schema {}", self.schema)));
        }
        let before = &self.before_family;
        let after = &self.after_family;
        if FamilySummary::of(before) != self.before {
            return Err(fail("before summary does not match the before family".into()));
        }
        if FamilySummary::of(after) != self.after {
            return Err(fail("after summary does not match the after family".into()));
        }
        let h = &self.subgroup;
        if h.ambient_m() != before.ambient_m() {
            return Err(fail("subgroup does not live in the before group".into()));
        }
        if after.ambient_m() != h.dim() {
            return Err(fail("after family is not indexed by the subgroup".into()));
        }
        if u64::from(self.h1) >= before.group_order() {
            return Err(fail(format!("h1 = {} out of range", self.h1)));
        }
        if self.shift_table.len() as u64 != h.order() {
            return Err(fail("shift table has the wrong length".into()));
        }
        for (c, &x) in self.shift_table.iter().enumerate() {
            if u64::from(x) >= before.group_order() {
                return Err(fail(format!("shift {x} out of range")));
            }
            let target = before.fibre(self.h1 ^ h.embed(c as u32));
            if let Some(a) = after
                .fibre(c as u32)
                .members()
                .find(|&a| !target.contains(h.embed(a) ^ x))
            {
                return Err(fail(format!(
                    "element {a} of fibre {c} does not embed into fibre {}",
                    self.h1 ^ h.embed(c as u32)
                )));
            }
        }
        if self.before.raw_count < self.after.raw_count {
            return Err(fail(format!(
                "quadruple count grew: {} < {}",
                self.before.raw_count, self.after.raw_count
            )));
        }
        if self.after.density < &self.before.density + &self.claimed_gain {
            return Err(fail(format!(
                "density {} below the claimed {} + {}",
                self.after.density, self.before.density, self.claimed_gain
            )));
        }
        if let (Some(g), CertKind::FibreSimultaneous | CertKind::DensityFn | CertKind::LargeL2Step) =
            (self.gamma, self.kind)
        {
            if !h.annihilator().contains(&g) || h.dim() + 1 != before.ambient_m() {
                return Err(fail(format!("subgroup is not the kernel of character {g}")));
            }
        }
        Ok(())
    }
}

/// Checks that consecutive certificates link up and returns the quadruple
/// counts `Q_0 ≥ Q_1 ≥ ... ≥ Q_k` along the chain.
pub fn verify_chain(start: &Family, certs: &[&IncrementCertificate]) -> Result<Vec<u128>> {
    let mut counts = vec![quadruple_count(start)];
    let mut current = start;
    for (i, cert) in certs.iter().enumerate() {
        if &cert.before_family != current {
            return Err(Error::Certificate {
                step: i,
                reason: "before family is not the previous after family".into(),
            });
        }
        cert.verify(i)?;
        counts.push(cert.after.raw_count);
        current = &cert.after_family;
    }
    Ok(counts)
}

/// `Λ(𝒜_0) ≥ (|H_k| / |H_0|)⁴ Λ(𝒜_k)`: turns a floor on the last family of
/// a chain into one on the first.
pub fn transport_floor(floor: &Rational, m_start: usize, m_end: usize) -> Rational {
    floor * crate::rational::pow2(4 * (m_end as i64 - m_start as i64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Z2Set;
    use crate::rational::int;

    fn trivial_cert(f: &Family) -> IncrementCertificate {
        let m = f.ambient_m();
        IncrementCertificate::build(
            CertKind::DyadicTrim,
            None,
            Subgroup2::whole(m),
            0,
            vec![0; 1 << m],
            int(0),
            BTreeMap::new(),
            f,
            f,
        )
        .unwrap()
    }

    #[test]
    fn identity_certificate_verifies() {
        let f = Family::full(2).unwrap();
        let c = trivial_cert(&f);
        assert!(c.verify(0).is_ok());
        assert_eq!(verify_chain(&f, &[&c]).unwrap().len(), 2);
    }

    #[test]
    fn tampering_is_detected() {
        let f = Family::full(2).unwrap();
        let mut c = trivial_cert(&f);
        c.after.raw_count += 1;
        assert!(c.verify(3).is_err());

        let mut c = trivial_cert(&f);
        let mut fibres = f.fibres().to_vec();
        fibres[0] = Z2Set::empty(2).unwrap();
        c.before_family = Family::new(2, fibres).unwrap();
        c.before = FamilySummary::of(&c.before_family);
        let err = c.verify(0).unwrap_err().to_string();
        assert!(err.contains("does not embed"), "{err}");
    }

    #[test]
    fn certificate_json_round_trip() {
        let f = Family::full(1).unwrap();
        let c = trivial_cert(&f);
        let s = serde_json::to_string(&c).unwrap();
        let back: IncrementCertificate = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
