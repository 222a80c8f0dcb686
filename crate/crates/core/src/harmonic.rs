//! Exact Fourier analysis on `Z_2^m` (Walsh-Hadamard) and `Z_4^n`.
//!
//! Normalisation: `f^(γ) = E_x f(x) conj(γ(x))`, so `f^(0)` is the mean and
//! Parseval reads `Σ_γ |f^(γ)|² = E_x |f(x)|²`. Characters of `Z_2^m` are
//! `x -> (-1)^{r.x}` and characters of `Z_4^n` are `x -> i^{r.x}`, both
//! indexed by element codes `r`.

use std::ops::{Add, Sub};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::group::{dot2, z2_order, Family, Subgroup2, Z2Set, Z4Set};
use crate::rational::{pow2, ratio, serde_rational, Rational};

/// A rational-valued function on `Z_2^m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RealFn2 {
    m: usize,
    values: Vec<Rational>,
}

impl RealFn2 {
    pub fn new(m: usize, values: Vec<Rational>) -> Result<Self> {
        if values.len() as u64 != z2_order(m) {
            return Err(Error::invalid(format!(
                "function on Z_2^{m} needs {} values, got {}",
                z2_order(m),
                values.len()
            )));
        }
        Ok(RealFn2 { m, values })
    }

    pub fn constant(m: usize, c: Rational) -> Self {
        RealFn2 {
            m,
            values: vec![c; z2_order(m) as usize],
        }
    }

    pub fn indicator(set: &Z2Set) -> Self {
        let m = set.ambient_m();
        let mut values = vec![Rational::zero(); z2_order(m) as usize];
        for x in set.members() {
            values[x as usize] = Rational::from_integer(1.into());
        }
        RealFn2 { m, values }
    }

    /// The density function `h -> P_H(A_h)` of a family.
    pub fn density_of(family: &Family) -> Self {
        let m = family.ambient_m();
        let values = (0..z2_order(m) as u32).map(|h| family.density_fn(h)).collect();
        RealFn2 { m, values }
    }

    /// The normalised measure `P_{H'} = (|H|/|H'|) 1_{H'}`.
    pub fn subgroup_measure(h: &Subgroup2) -> Self {
        let m = h.ambient_m();
        let weight = pow2((m - h.dim()) as i64);
        let mut values = vec![Rational::zero(); z2_order(m) as usize];
        for x in h.members() {
            values[x as usize] = weight.clone();
        }
        RealFn2 { m, values }
    }

    pub fn ambient_m(&self) -> usize {
        self.m
    }

    pub fn value(&self, x: u32) -> &Rational {
        &self.values[x as usize]
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn mean(&self) -> Rational {
        let total: Rational = self.values.iter().sum();
        total / Rational::from_integer(z2_order(self.m).into())
    }

    pub fn mean_square(&self) -> Rational {
        let total: Rational = self.values.iter().map(|v| v * v).sum();
        total / Rational::from_integer(z2_order(self.m).into())
    }

    /// Average of the function over the coset `x + H'`, i.e. `(f * P_{H'})(x)`.
    pub fn coset_average(&self, h: &Subgroup2, x: u32) -> Rational {
        let total: Rational = h.members().map(|y| &self.values[(x ^ y) as usize]).sum();
        total / Rational::from_integer(h.order().into())
    }
}

/// Exact Walsh-Hadamard coefficients of a function on `Z_2^m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Spectrum2 {
    m: usize,
    coeffs: Vec<Rational>,
}

impl Spectrum2 {
    pub fn ambient_m(&self) -> usize {
        self.m
    }

    pub fn coeff(&self, gamma: u32) -> &Rational {
        &self.coeffs[gamma as usize]
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    /// `{"<bits>": [num, den], ...}` with characters as binary strings.
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for (g, c) in self.coeffs.iter().enumerate() {
            map.insert(bit_string(g as u32, self.m), serde_rational::to_value(c));
        }
        Value::Object(map)
    }
}

pub(crate) fn bit_string(code: u32, m: usize) -> String {
    (0..m)
        .map(|i| if code >> (m - 1 - i) & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub(crate) fn digit_string(code: u32, n: usize) -> String {
    (0..n)
        .map(|i| char::from(b'0' + ((code >> (2 * (n - 1 - i))) & 3) as u8))
        .collect()
}

/// Unnormalised in-place butterfly: `out[γ] = Σ_x in[x] (-1)^{γ.x}`.
pub fn butterfly<T>(data: &mut [T])
where
    T: Clone + Add<Output = T> + Sub<Output = T>,
{
    let len = data.len();
    assert!(len.is_power_of_two(), "butterfly length must be a power of two");
    let mut half = 1;
    while half < len {
        for block in (0..len).step_by(2 * half) {
            for i in block..block + half {
                let u = data[i].clone();
                let v = data[i + half].clone();
                data[i] = u.clone() + v.clone();
                data[i + half] = u - v;
            }
        }
        half *= 2;
    }
}

/// `Σ_{x in S} (-1)^{γ.x}` for every `γ`; the integer numerators of `1_S^`
/// over the common denominator `2^m`.
pub fn indicator_wht(set: &Z2Set) -> Vec<i64> {
    let mut data = vec![0i64; set.group_order() as usize];
    for x in set.members() {
        data[x as usize] = 1;
    }
    butterfly(&mut data);
    data
}

/// Unnormalised transform of an integer-valued function.
pub fn int_wht(values: &[i64]) -> Vec<i64> {
    let mut data = values.to_vec();
    butterfly(&mut data);
    data
}

pub fn wht(f: &RealFn2) -> Spectrum2 {
    let mut data = f.values.clone();
    butterfly(&mut data);
    let scale = pow2(-(f.m as i64));
    for c in data.iter_mut() {
        *c *= &scale;
    }
    Spectrum2 { m: f.m, coeffs: data }
}

/// `f(x) = Σ_γ f^(γ) (-1)^{γ.x}`.
pub fn inverse_wht(s: &Spectrum2) -> RealFn2 {
    let mut data = s.coeffs.clone();
    butterfly(&mut data);
    RealFn2 { m: s.m, values: data }
}

/// `(f * g)(x) = E_y f(y) g(x - y)` through the transform.
pub fn convolve2(f: &RealFn2, g: &RealFn2) -> Result<RealFn2> {
    if f.m != g.m {
        return Err(Error::DimensionMismatch {
            expected: f.m,
            found: g.m,
        });
    }
    let fs = wht(f);
    let gs = wht(g);
    let coeffs = fs.coeffs.iter().zip(&gs.coeffs).map(|(a, b)| a * b).collect();
    Ok(inverse_wht(&Spectrum2 { m: f.m, coeffs }))
}

pub fn spectrum_of_set(set: &Z2Set) -> Spectrum2 {
    let scale = pow2(-(set.ambient_m() as i64));
    Spectrum2 {
        m: set.ambient_m(),
        coeffs: indicator_wht(set)
            .into_iter()
            .map(|v| Rational::from_integer(v.into()) * &scale)
            .collect(),
    }
}

/// Largest `|s(γ)|` over `γ ≠ 0`, least character on ties.
pub fn sup_nontrivial(s: &Spectrum2) -> Result<(u32, Rational)> {
    if s.m == 0 {
        return Err(Error::precondition("Z_2^0 has no nontrivial characters"));
    }
    let mut best = (1u32, s.coeffs[1].abs());
    for (g, c) in s.coeffs.iter().enumerate().skip(2) {
        let a = c.abs();
        if a > best.1 {
            best = (g as u32, a);
        }
    }
    Ok(best)
}

/// Integer version for indicator numerators: returns the least `γ ≠ 0`
/// maximising `|w[γ]|`.
pub(crate) fn sup_nontrivial_int(w: &[i64]) -> Option<(u32, i64)> {
    let mut best: Option<(u32, i64)> = None;
    for (g, v) in w.iter().enumerate().skip(1) {
        let a = v.abs();
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((g as u32, a));
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaussianRational {
    #[serde(with = "serde_rational")]
    pub re: Rational,
    #[serde(with = "serde_rational")]
    pub im: Rational,
}

impl GaussianRational {
    pub fn norm_sq(&self) -> Rational {
        &self.re * &self.re + &self.im * &self.im
    }
}

/// Fourier coefficients of `1_A` for `A ⊂ Z_4^n`, held as Gaussian integers
/// over the common denominator `4^n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Spectrum4 {
    n: usize,
    re: Vec<i64>,
    im: Vec<i64>,
}

impl Spectrum4 {
    pub fn ambient_n(&self) -> usize {
        self.n
    }

    /// Numerator pair `(re, im)` of the coefficient at `r`.
    pub fn scaled(&self, r: u32) -> (i64, i64) {
        (self.re[r as usize], self.im[r as usize])
    }

    pub fn coeff(&self, r: u32) -> GaussianRational {
        let den = 1u64 << (2 * self.n);
        GaussianRational {
            re: Rational::new(self.re[r as usize].into(), den.into()),
            im: Rational::new(self.im[r as usize].into(), den.into()),
        }
    }

    pub fn abs_sq(&self, r: u32) -> Rational {
        let (a, b) = self.scaled(r);
        let num = i128::from(a) * i128::from(a) + i128::from(b) * i128::from(b);
        Rational::new(num.into(), (1i128 << (4 * self.n)).into())
    }

    /// `Σ_{r : 2r = 0} 1_A^(r)²`; those characters are real.
    pub fn lev_sum(&self) -> Result<Rational> {
        let mut acc: i128 = 0;
        for r in 0..self.re.len() as u32 {
            if crate::group::double4(r) != 0 {
                continue;
            }
            let (a, b) = self.scaled(r);
            if b != 0 {
                return Err(Error::mismatch(
                    "lev_sum",
                    format!("real character {r} has imaginary coefficient {b}"),
                ));
            }
            acc += i128::from(a) * i128::from(a);
        }
        Ok(Rational::new(acc.into(), (1i128 << (4 * self.n)).into()))
    }

    /// Largest `|1_A^(r)|²` over `r ≠ 0`, least `r` on ties.
    pub fn sup_nontrivial_sq(&self) -> Option<(u32, Rational)> {
        let mut best: Option<(u32, i128)> = None;
        for r in 1..self.re.len() {
            let a = i128::from(self.re[r]);
            let b = i128::from(self.im[r]);
            let v = a * a + b * b;
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((r as u32, v));
            }
        }
        best.map(|(r, v)| (r, Rational::new(v.into(), (1i128 << (4 * self.n)).into())))
    }

    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for r in 0..self.re.len() as u32 {
            let c = self.coeff(r);
            map.insert(
                digit_string(r, self.n),
                Value::Array(vec![serde_rational::to_value(&c.re), serde_rational::to_value(&c.im)]),
            );
        }
        Value::Object(map)
    }
}

/// `1_A^(r) = 4^{-n} Σ_x 1_A(x) i^{-r.x}` via radix-4 butterflies, one lane
/// (coordinate) at a time.
pub fn dft4(a: &Z4Set) -> Spectrum4 {
    let n = a.ambient_n();
    let len = a.group_order() as usize;
    let mut re = vec![0i64; len];
    let mut im = vec![0i64; len];
    for x in a.members() {
        re[x as usize] = 1;
    }
    for lane in 0..n {
        let stride = 1usize << (2 * lane);
        for base in 0..len {
            if !(base / stride).is_multiple_of(4) {
                continue;
            }
            let idx = [base, base + stride, base + 2 * stride, base + 3 * stride];
            let vr = idx.map(|i| re[i]);
            let vi = idx.map(|i| im[i]);
            for (k, &out) in idx.iter().enumerate() {
                let mut sr = 0i64;
                let mut si = 0i64;
                for j in 0..4 {
                    // multiply by (-i)^{jk}
                    let (tr, ti) = match (j * k) % 4 {
                        0 => (vr[j], vi[j]),
                        1 => (vi[j], -vr[j]),
                        2 => (-vr[j], -vi[j]),
                        _ => (-vi[j], vr[j]),
                    };
                    sr += tr;
                    si += ti;
                }
                re[out] = sr;
                im[out] = si;
            }
        }
    }
    Spectrum4 { n, re, im }
}

/// `1_A^(r)` by direct summation; the independent oracle for [`dft4`].
pub fn dft4_direct(a: &Z4Set, r: u32) -> (i64, i64) {
    let n = a.ambient_n();
    let mut acc = (0i64, 0i64);
    for x in a.members() {
        match (4 - crate::group::dot4(r, x, n)) % 4 {
            0 => acc.0 += 1,
            1 => acc.1 += 1,
            2 => acc.0 -= 1,
            _ => acc.1 -= 1,
        }
    }
    acc
}

/// `1_S^(γ)` as an exact rational by direct summation.
pub fn coeff_direct(set: &Z2Set, gamma: u32) -> Rational {
    let s: i64 = set.members().map(|x| if dot2(gamma, x) { -1 } else { 1 }).sum();
    ratio(0, 1) + Rational::new(s.into(), set.group_order().into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::subgroup_from_character;
    use crate::rational::{int, rat};

    #[test]
    fn constant_function_spectrum() {
        let s = wht(&RealFn2::constant(3, int(1)));
        assert_eq!(s.coeff(0), &int(1));
        assert!(s.coeffs()[1..].iter().all(Zero::is_zero));
    }

    #[test]
    fn point_mass_spectrum() {
        let m = 4;
        let s = spectrum_of_set(&Z2Set::from_codes(m, [0]).unwrap());
        assert!(s.coeffs().iter().all(|c| *c == rat(1, 16)));
    }

    #[test]
    fn subgroup_indicator_spectrum() {
        for m in 1..=4 {
            for g0 in 1..(1u32 << m) {
                let h = subgroup_from_character(m, g0).unwrap();
                let set = Z2Set::from_subgroup(&h);
                let s = wht(&RealFn2::indicator(&set));
                for g in 0..(1u32 << m) {
                    let expected = if g == 0 || g == g0 { rat(1, 2) } else { int(0) };
                    assert_eq!(s.coeff(g), &expected);
                    assert_eq!(coeff_direct(&set, g), expected);
                }
                assert_eq!(sup_nontrivial(&s).unwrap(), (g0, rat(1, 2)));
            }
        }
    }

    #[test]
    fn sup_ties_pick_least_character() {
        // 1_{x0 = 0} + 1_{x1 = 0} style function with equal weights at two characters
        let f = RealFn2::new(2, vec![int(2), int(1), int(1), int(0)]).unwrap();
        let s = wht(&f);
        assert_eq!(s.coeff(1), s.coeff(2));
        assert_eq!(sup_nontrivial(&s).unwrap().0, 1);
        let flat = wht(&RealFn2::constant(2, int(1)));
        assert_eq!(sup_nontrivial(&flat).unwrap(), (1, int(0)));
    }

    #[test]
    fn convolution_identities() {
        let m = 3;
        let f = RealFn2::new(m, (0..8).map(|i| rat(i * i - 3, 7)).collect()).unwrap();
        let mut delta = vec![int(0); 8];
        delta[0] = int(8);
        let delta = RealFn2::new(m, delta).unwrap();
        assert_eq!(convolve2(&f, &delta).unwrap(), f);

        let h = subgroup_from_character(m, 0b101).unwrap();
        let ind = RealFn2::indicator(&Z2Set::from_subgroup(&h));
        let meas = RealFn2::subgroup_measure(&h);
        assert_eq!(convolve2(&ind, &meas).unwrap(), ind);
        assert!(convolve2(&ind, &RealFn2::constant(2, int(1))).is_err());
    }

    #[test]
    fn dft4_examples() {
        let full = Z4Set::full(2).unwrap();
        let s = dft4(&full);
        assert_eq!(s.scaled(0), (16, 0));
        assert!((1..16).all(|r| s.scaled(r) == (0, 0)));

        let point = Z4Set::from_codes(1, [0]).unwrap();
        let s = dft4(&point);
        for r in 0..4 {
            assert_eq!(s.coeff(r).re, rat(1, 4));
            assert_eq!(s.coeff(r).im, int(0));
        }
    }

    #[test]
    fn dft4_single_generator() {
        // A = {1} in Z_4: 1_A^(r) = i^{-r} / 4
        let s = dft4(&Z4Set::from_codes(1, [1]).unwrap());
        assert_eq!(s.scaled(0), (1, 0));
        assert_eq!(s.scaled(1), (0, -1));
        assert_eq!(s.scaled(2), (-1, 0));
        assert_eq!(s.scaled(3), (0, 1));
    }
}
