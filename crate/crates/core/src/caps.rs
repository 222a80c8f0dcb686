//! Enumeration caps. Each can be overridden from the environment.

use crate::error::{Error, Result};

pub const SUBGROUP_CAP_ENV: &str = "Z4AP_SUBGROUP_CAP";
pub const NAIVE_CAP_ENV: &str = "Z4AP_NAIVE_CAP";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    /// Largest `m` for exhaustive subgroup enumeration of `Z_2^m`.
    pub subgroup_m: usize,
    /// Largest `n` for the naive `(x, d)` progression count over `Z_4^n`.
    pub naive_n: usize,
    /// Largest `n` accepted by the progression-free maximum search.
    pub search_n: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            subgroup_m: 5,
            naive_n: 8,
            search_n: 3,
        }
    }
}

impl Caps {
    pub fn from_env() -> Result<Self> {
        let mut caps = Caps::default();
        if let Some(v) = read(SUBGROUP_CAP_ENV)? {
            caps.subgroup_m = v;
        }
        if let Some(v) = read(NAIVE_CAP_ENV)? {
            caps.naive_n = v;
        }
        Ok(caps)
    }

    pub fn check_naive(&self, n: usize) -> Result<()> {
        check("naive count dimension", n, self.naive_n)
    }

    pub fn check_subgroup(&self, m: usize) -> Result<()> {
        check("subgroup enumeration dimension", m, self.subgroup_m)
    }

    pub fn check_search(&self, n: usize) -> Result<()> {
        check("search dimension", n, self.search_n)
    }
}

fn check(what: &'static str, value: usize, cap: usize) -> Result<()> {
    if value > cap {
        return Err(Error::CapExceeded { what, value, cap });
    }
    Ok(())
}

fn read(var: &str) -> Result<Option<usize>> {
    match std::env::var(var) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid(format!("{var}={s:?} is not a non-negative integer"))),
        Err(_) => Ok(None),
    }
}
