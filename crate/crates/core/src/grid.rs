//! Time x frequency token grid geometry.
//!
//! Tokens are flattened time-major: the token at time `a`, frequency `b`
//! sits at `a * n_f + b`, so tokens sharing a frequency band are exactly
//! `n_f` apart and form the residue class `b mod n_f`.

use crate::error::{validation, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Spectrogrid {
    n_t: usize,
    n_f: usize,
}

impl Spectrogrid {
    pub fn new(n_t: usize, n_f: usize) -> Result<Self> {
        if n_t == 0 || n_f == 0 {
            return Err(validation(format!(
                "grid dimensions must be positive, got n_t={n_t}, n_f={n_f}"
            )));
        }
        n_t.checked_mul(n_f)
            .ok_or_else(|| validation("grid token count overflows"))?;
        Ok(Self { n_t, n_f })
    }

    /// Grid for an audio length, scaling time steps linearly from a
    /// 10-second reference.
    pub fn for_length(seconds: u32, nt_per_10s: usize, n_f: usize) -> Result<Self> {
        let n_t = nt_per_10s * seconds as usize / 10;
        Self::new(n_t, n_f)
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_f(&self) -> usize {
        self.n_f
    }

    pub fn n_tokens(&self) -> usize {
        self.n_t * self.n_f
    }

    pub fn token_index(&self, a: usize, b: usize) -> Result<usize> {
        if a >= self.n_t || b >= self.n_f {
            return Err(validation(format!(
                "coordinate ({a}, {b}) outside grid {}x{}",
                self.n_t, self.n_f
            )));
        }
        Ok(a * self.n_f + b)
    }

    pub fn token_coords(&self, i: usize) -> Result<(usize, usize)> {
        self.check_token(i)?;
        Ok((i / self.n_f, i % self.n_f))
    }

    /// Frequency band of token `i` (no bounds check).
    #[inline]
    pub fn band(&self, i: usize) -> usize {
        i % self.n_f
    }

    pub fn check_token(&self, i: usize) -> Result<()> {
        if i >= self.n_tokens() {
            return Err(validation(format!(
                "token {i} out of range for {} tokens",
                self.n_tokens()
            )));
        }
        Ok(())
    }

    /// All tokens in band `b`, ascending. Length is `n_t`.
    pub fn band_tokens(&self, b: usize) -> Vec<usize> {
        (0..self.n_t).map(|a| a * self.n_f + b).collect()
    }

    /// `{ j in [0, N) : j mod n_f == i mod n_f }`, ascending.
    pub fn same_frequency_set(&self, i: usize) -> Result<Vec<usize>> {
        self.check_token(i)?;
        Ok(self.band_tokens(self.band(i)))
    }
}

impl std::fmt::Display for Spectrogrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.n_t, self.n_f)
    }
}
