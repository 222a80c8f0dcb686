//! Exact counting of three-term progressions in `Z_4^n`, the family
//! formalism over `Z_2^m`, certified density-increment steps, and the
//! progression-free constructions.
//!
//! All arithmetic is exact: integer counts, dyadic fast paths, and
//! arbitrary-precision rationals everywhere else.

pub mod caps;
pub mod certificate;
pub mod constructions;
pub mod counting;
pub mod engine;
pub mod error;
pub mod format;
pub mod group;
pub mod harmonic;
pub mod increment;
pub mod random;
pub mod rational;
pub mod regularize;
pub mod trace;

pub use caps::Caps;
pub use error::{Error, Result};
pub use group::{ElemZ2, ElemZ4, Family, Subgroup2, Z2Set, Z4Set};
pub use rational::Rational;
