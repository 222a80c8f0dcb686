//! Text formats for sets and families.
//!
//! A set file starts with `z4 n=<n>` or `z2 m=<m>` and lists one element per
//! line as a base-4 (or binary) digit string, most significant coordinate
//! first. A family file starts with `family m=<m>` and has lines
//! `<h>: <a> <a> ...` with `h` and the fibre members as binary strings;
//! fibres without a line are empty. Lines starting with `#` are comments and
//! blank lines are ignored. Repeated elements or fibre indices are errors.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::group::{ElemZ2, ElemZ4, Family, Z2Set, Z4Set, MAX_Z2_DIM, MAX_Z4_DIM};
use crate::harmonic::{bit_string, digit_string};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SetFile {
    Z4(Z4Set),
    Z2(Z2Set),
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_header(line: usize, text: &str, keyword: &str, var: &str, max: usize) -> Result<usize> {
    let rest = text
        .strip_prefix(keyword)
        .map(str::trim_start)
        .and_then(|r| r.strip_prefix(var))
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| parse_err(line, format!("expected header `{keyword} {var}=<dim>`, found {text:?}")))?;
    let dim: usize = rest
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad dimension {rest:?}")))?;
    if dim == 0 || dim > max {
        return Err(parse_err(line, format!("dimension {dim} outside 1..={max}")));
    }
    Ok(dim)
}

fn digits(line: usize, s: &str, base: u8, len: usize) -> Result<Vec<u8>> {
    if s.len() != len {
        return Err(parse_err(line, format!("{s:?} should have {len} digits")));
    }
    s.bytes()
        .map(|b| match b.checked_sub(b'0') {
            Some(d) if d < base => Ok(d),
            _ => Err(parse_err(line, format!("{s:?} is not a base-{base} string"))),
        })
        .collect()
}

fn z2_code(line: usize, s: &str, m: usize) -> Result<u32> {
    Ok(ElemZ2::from_bits(&digits(line, s, 2, m)?)?.code())
}

pub fn parse_set(text: &str) -> Result<SetFile> {
    let mut lines = content_lines(text);
    let (n0, head) = lines.next().ok_or_else(|| parse_err(1, "empty set file"))?;
    let z4 = head.starts_with("z4");
    let dim = if z4 {
        parse_header(n0, head, "z4", "n", MAX_Z4_DIM)?
    } else {
        parse_header(n0, head, "z2", "m", MAX_Z2_DIM)?
    };
    let mut seen = BTreeSet::new();
    for (n, l) in lines {
        let code = if z4 {
            ElemZ4::from_digits(&digits(n, l, 4, dim)?)?.code()
        } else {
            z2_code(n, l, dim)?
        };
        if !seen.insert(code) {
            return Err(parse_err(n, format!("duplicate element {l}")));
        }
    }
    Ok(if z4 {
        SetFile::Z4(Z4Set::from_codes(dim, seen)?)
    } else {
        SetFile::Z2(Z2Set::from_codes(dim, seen)?)
    })
}

pub fn parse_z4(text: &str) -> Result<Z4Set> {
    match parse_set(text)? {
        SetFile::Z4(a) => Ok(a),
        SetFile::Z2(_) => Err(Error::invalid("expected a z4 set file, found z2")),
    }
}

pub fn parse_z2(text: &str) -> Result<Z2Set> {
    match parse_set(text)? {
        SetFile::Z2(a) => Ok(a),
        SetFile::Z4(_) => Err(Error::invalid("expected a z2 set file, found z4")),
    }
}

pub fn write_z4(a: &Z4Set) -> String {
    let n = a.ambient_n();
    let mut out = format!("z4 n={n}\n");
    for x in a.members() {
        out.push_str(&digit_string(x, n));
        out.push('\n');
    }
    out
}

pub fn write_z2(a: &Z2Set) -> String {
    let m = a.ambient_m();
    let mut out = format!("z2 m={m}\n");
    for x in a.members() {
        out.push_str(&bit_string(x, m));
        out.push('\n');
    }
    out
}

pub fn write_set(s: &SetFile) -> String {
    match s {
        SetFile::Z4(a) => write_z4(a),
        SetFile::Z2(a) => write_z2(a),
    }
}

pub fn parse_family(text: &str) -> Result<Family> {
    let mut lines = content_lines(text);
    let (n0, head) = lines.next().ok_or_else(|| parse_err(1, "empty family file"))?;
    let m = parse_header(n0, head, "family", "m", MAX_Z2_DIM)?;
    let mut fibres: Vec<Option<Z2Set>> = vec![None; 1 << m];
    for (n, l) in lines {
        let (h, rest) = l
            .split_once(':')
            .ok_or_else(|| parse_err(n, "expected `<h>: <members>`"))?;
        let h = z2_code(n, h.trim(), m)?;
        if fibres[h as usize].is_some() {
            return Err(parse_err(n, format!("fibre {} listed twice", bit_string(h, m))));
        }
        let mut seen = BTreeSet::new();
        for tok in rest.split_whitespace() {
            if !seen.insert(z2_code(n, tok, m)?) {
                return Err(parse_err(n, format!("duplicate element {tok}")));
            }
        }
        fibres[h as usize] = Some(Z2Set::from_codes(m, seen)?);
    }
    let fibres = fibres
        .into_iter()
        .map(|f| f.map_or_else(|| Z2Set::empty(m), Ok))
        .collect::<Result<Vec<_>>>()?;
    Family::new(m, fibres)
}

pub fn write_family(f: &Family) -> String {
    let m = f.ambient_m();
    let mut out = format!("family m={m}\n");
    for (h, fib) in f.fibres().iter().enumerate() {
        out.push_str(&bit_string(h as u32, m));
        out.push(':');
        for a in fib.members() {
            out.push(' ');
            out.push_str(&bit_string(a, m));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::a0;

    #[test]
    fn z4_round_trip() {
        let a = a0();
        let text = write_z4(&a);
        assert!(text.starts_with("z4 n=3\n000\n001\n"));
        assert_eq!(parse_z4(&text).unwrap(), a);
    }

    #[test]
    fn comments_blank_lines_and_order() {
        let text = "# a comment\nz2 m=3\n\n101\n# another\n001\n";
        let s = parse_z2(text).unwrap();
        assert_eq!(s.members().collect::<Vec<_>>(), vec![1, 5]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let dup = "z4 n=2\n01\n01\n";
        assert!(matches!(parse_set(dup), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_set("z4 n=2\n014\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_set("z4 n=2\n04\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_set("z5 n=2\n").is_err());
        assert!(parse_set("z4 n=0\n").is_err());
        assert!(parse_set("").is_err());
        assert!(parse_z4("z2 m=2\n01\n").is_err());
    }

    #[test]
    fn family_round_trip() {
        let text = "family m=2\n00: 00 11\n10: 01\n";
        let f = parse_family(text).unwrap();
        assert_eq!(f.fibre(0).len(), 2);
        assert_eq!(f.fibre(1).len(), 0);
        assert_eq!(f.fibre(2).members().collect::<Vec<_>>(), vec![1]);
        assert_eq!(parse_family(&write_family(&f)).unwrap(), f);
        assert!(parse_family("family m=2\n00: 00\n00: 01\n").is_err());
        assert!(parse_family("family m=2\n00 00\n").is_err());
    }
}
