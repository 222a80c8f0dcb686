//! Exact rationals and the fixed-point surrogates used wherever a proof step
//! calls for a logarithm or a square root.

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// `count / total`, the usual density of a finite set.
pub fn ratio(count: u64, total: u64) -> Rational {
    Rational::new(BigInt::from(count), BigInt::from(total))
}

/// `2^k` for any integer `k`.
pub fn pow2(k: i64) -> Rational {
    let p = BigInt::one() << k.unsigned_abs();
    if k >= 0 {
        Rational::from_integer(p)
    } else {
        Rational::new(BigInt::one(), p)
    }
}

pub fn powi(x: &Rational, e: u32) -> Rational {
    num_traits::pow(x.clone(), e as usize)
}

pub fn ceil_to_int(x: &Rational) -> BigInt {
    x.ceil().to_integer()
}

pub fn floor_to_int(x: &Rational) -> BigInt {
    x.floor().to_integer()
}

pub fn bit_length(n: &BigInt) -> u64 {
    n.magnitude().bits()
}

/// Smallest integer `k` with `2^k >= x`, for `x > 0`.
pub fn log2_ceil(x: &Rational) -> i64 {
    assert!(x.is_positive(), "log2_ceil of non-positive value");
    let num = x.numer().magnitude().bits() as i64;
    let den = x.denom().magnitude().bits() as i64;
    let mut k = num - den;
    // 2^k within one of the answer; settle exactly.
    while pow2(k) < *x {
        k += 1;
    }
    while pow2(k - 1) >= *x {
        k -= 1;
    }
    k
}

/// Largest integer `k` with `2^k <= x`, for `x > 0`.
pub fn log2_floor(x: &Rational) -> i64 {
    let c = log2_ceil(x);
    if pow2(c) == *x {
        c
    } else {
        c - 1
    }
}

/// `floor(sqrt(x) * 2^bits) / 2^bits`; never exceeds the true square root.
pub fn sqrt_floor(x: &Rational, bits: u32) -> Rational {
    assert!(!x.is_negative(), "sqrt of negative value");
    let scaled = floor_to_int(&(x * pow2(2 * bits as i64)));
    let root = scaled.magnitude().sqrt();
    Rational::new(BigInt::from_biguint(Sign::Plus, root), BigInt::one() << bits)
}

fn ln_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top: BigUint = n >> shift;
    top.to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// Rigorous enclosure `lo <= ln(x) <= hi` on the grid `2^-bits`.
///
/// The double-precision estimate is accurate to far better than the
/// `1e-9` slack, so rounding outward on the grid keeps both ends sound.
pub fn ln_bounds(x: &Rational, bits: u32) -> (Rational, Rational) {
    assert!(x.is_positive(), "ln of non-positive value");
    if x.is_one() {
        return (Rational::zero(), Rational::zero());
    }
    let est = ln_biguint(x.numer().magnitude()) - ln_biguint(x.denom().magnitude());
    let slack = 1e-9 * (1.0 + est.abs());
    let scale = (1u64 << bits) as f64;
    let lo = ((est - slack) * scale).floor() as i64;
    let hi = ((est + slack) * scale).ceil() as i64;
    (
        Rational::new(BigInt::from(lo), BigInt::one() << bits),
        Rational::new(BigInt::from(hi), BigInt::one() << bits),
    )
}

pub fn ln_upper(x: &Rational, bits: u32) -> Rational {
    ln_bounds(x, bits).1
}

pub fn ln_lower(x: &Rational, bits: u32) -> Rational {
    ln_bounds(x, bits).0
}

pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Serde helpers: rationals travel as `[num, den]` with integer entries, or
/// decimal strings once they no longer fit in 64 bits.
pub mod serde_rational {
    use super::Rational;
    use num_bigint::BigInt;
    use num_traits::ToPrimitive;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::Value;

    fn part(v: &BigInt) -> Value {
        match v.to_i64() {
            Some(x) => Value::from(x),
            None => Value::from(v.to_string()),
        }
    }

    pub fn to_value(x: &Rational) -> Value {
        Value::Array(vec![part(x.numer()), part(x.denom())])
    }

    pub fn from_value(v: &Value) -> Result<Rational, String> {
        let arr = v.as_array().ok_or("rational must be [num, den]")?;
        if arr.len() != 2 {
            return Err("rational must be [num, den]".into());
        }
        let get = |p: &Value| -> Result<BigInt, String> {
            match p {
                Value::Number(n) => n.as_i64().map(BigInt::from).ok_or_else(|| format!("bad integer {n}")),
                Value::String(s) => s.parse().map_err(|_| format!("bad integer {s:?}")),
                _ => Err("rational parts must be integers".into()),
            }
        };
        let num = get(&arr[0])?;
        let den = get(&arr[1])?;
        if den == BigInt::from(0) {
            return Err("zero denominator".into());
        }
        let r = Rational::new(num.clone(), den.clone());
        if r.numer() != &num || r.denom() != &den {
            return Err("rational not in lowest terms".into());
        }
        Ok(r)
    }

    pub fn serialize<S: Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
        to_value(x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let v = Value::deserialize(d)?;
        from_value(&v).map_err(D::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(x: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(r) => to_value(r).serialize(s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
            let v = Value::deserialize(d)?;
            if v.is_null() {
                return Ok(None);
            }
            from_value(&v).map(Some).map_err(D::Error::custom)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log2_ceil_and_floor() {
        assert_eq!(log2_ceil(&int(1)), 0);
        assert_eq!(log2_ceil(&int(5)), 3);
        assert_eq!(log2_ceil(&rat(1, 4)), -2);
        assert_eq!(log2_ceil(&rat(1, 3)), -1);
        assert_eq!(log2_floor(&rat(1, 3)), -2);
        assert_eq!(log2_floor(&int(8)), 3);
    }

    #[test]
    fn sqrt_floor_never_overshoots() {
        for (n, d) in [(1, 2), (2, 1), (9, 4), (1, 1000), (7, 3)] {
            let x = rat(n, d);
            let r = sqrt_floor(&x, 8);
            assert!(&r * &r <= x);
            let next = &r + pow2(-8);
            assert!(&next * &next > x);
        }
        assert_eq!(sqrt_floor(&rat(9, 4), 8), rat(3, 2));
    }

    #[test]
    fn ln_bounds_enclose() {
        for (n, d) in [(3, 1), (4, 1), (1, 7), (1000, 3), (1, 1)] {
            let x = rat(n, d);
            let (lo, hi) = ln_bounds(&x, 8);
            let v = (n as f64 / d as f64).ln();
            assert!(to_f64(&lo) <= v && v <= to_f64(&hi));
            assert!(&hi - &lo <= pow2(-7));
        }
    }

    #[test]
    fn rational_json_round_trip() {
        let x = rat(-3, 8);
        let v = serde_rational::to_value(&x);
        assert_eq!(v.to_string(), "[-3,8]");
        assert_eq!(serde_rational::from_value(&v).unwrap(), x);
        assert!(serde_rational::from_value(&serde_json::json!([2, 4])).is_err());
    }
}
