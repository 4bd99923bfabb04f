//! Fractions in `[0, 1]` with exact `floor(r * n)`.
//!
//! A fraction keeps the decimal it was written as (`0.1` is exactly 1/10,
//! not the nearest binary64), so `floor(0.1 * 4096)` is 409 and
//! `floor(0.29 * 100)` is 29 rather than a float-rounded 28.
//! Decimals longer than 19 places are rounded half-up to 19 places.

use std::fmt;
use std::str::FromStr;

use crate::error::{validation, Error, Result};

/// Largest power of ten that fits a `u64` denominator.
const MAX_PLACES: usize = 19;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fraction {
    num: u64,
    den: u64,
}

impl Fraction {
    pub const ZERO: Fraction = Fraction { num: 0, den: 1 };
    pub const ONE: Fraction = Fraction { num: 1, den: 1 };

    /// Exact rational `num / den`, which must lie in `[0, 1]`.
    pub fn from_ratio(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num > den {
            return Err(validation(format!("fraction {num}/{den} outside [0, 1]")));
        }
        let g = gcd(num, den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    /// Reads `r` through its shortest round-trip decimal representation.
    pub fn from_f64(r: f64) -> Result<Self> {
        if !r.is_finite() {
            return Err(validation(format!("fraction must be finite, got {r}")));
        }
        format!("{r}").parse()
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    /// Exact `floor(self * n)`.
    pub fn floor_mul(&self, n: usize) -> usize {
        ((self.num as u128 * n as u128) / self.den as u128) as usize
    }
}

impl FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || validation(format!("`{s}` is not a decimal fraction in [0, 1]"));
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let frac = frac.trim_end_matches('0');
        let (kept, round_up) = match frac.len() {
            0..=MAX_PLACES => (frac, false),
            _ => (&frac[..MAX_PLACES], frac.as_bytes()[MAX_PLACES] >= b'5'),
        };
        let den = 10u64.pow(kept.len() as u32);
        let int_val: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_val: u64 = if kept.is_empty() { 0 } else { kept.parse().map_err(|_| bad())? };
        let num = int_val
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_val + round_up as u64))
            .ok_or_else(bad)?;
        Self::from_ratio(num, den)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}
