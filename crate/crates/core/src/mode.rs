use std::fmt;
use std::str::FromStr;

use crate::error::{validation, Error, Result};
use crate::fraction::Fraction;

/// Which attention kernel a call (or pipeline block) runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionMode {
    /// Full `softmax(QK^T / sqrt(d_k)) V`.
    Dense,
    /// Same-frequency band plus a shared random compensation set.
    LiteFocus { r: Fraction, seed: u64 },
    /// Same-frequency band only.
    SameFreqOnly,
    /// Shared random compensation set only.
    CompOnly { r: Fraction, seed: u64 },
    /// Bipartite token merging before dense attention.
    TokenMerge { ratio: Fraction },
}

impl AttentionMode {
    pub fn litefocus(r: f64, seed: u64) -> Result<Self> {
        Ok(Self::LiteFocus {
            r: Fraction::from_f64(r)?,
            seed,
        })
    }

    pub fn comp_only(r: f64, seed: u64) -> Result<Self> {
        Ok(Self::CompOnly {
            r: Fraction::from_f64(r)?,
            seed,
        })
    }

    pub fn token_merge(ratio: f64) -> Result<Self> {
        let ratio = Fraction::from_f64(ratio)?;
        if ratio.value() >= 0.5 {
            return Err(validation(format!("merge ratio must be < 0.5, got {ratio}")));
        }
        Ok(Self::TokenMerge { ratio })
    }

    /// Same mode with its compensation seed replaced; no-op for seedless modes.
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            Self::LiteFocus { r, .. } => Self::LiteFocus { r, seed },
            Self::CompOnly { r, .. } => Self::CompOnly { r, seed },
            other => other,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match *self {
            Self::LiteFocus { seed, .. } | Self::CompOnly { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// True for the three focus-set modes.
    pub fn is_focus(&self) -> bool {
        matches!(
            self,
            Self::LiteFocus { .. } | Self::SameFreqOnly | Self::CompOnly { .. }
        )
    }
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Dense => f.write_str("dense"),
            Self::LiteFocus { r, .. } => write!(f, "litefocus:r={r}"),
            Self::SameFreqOnly => f.write_str("samefreq"),
            Self::CompOnly { r, .. } => write!(f, "componly:r={r}"),
            Self::TokenMerge { ratio } => write!(f, "tome:ratio={ratio}"),
        }
    }
}

/// Parses `dense`, `litefocus:r=<f>`, `samefreq`, `componly:r=<f>`,
/// `tome:ratio=<f>`. Seeded modes start with seed 0; see [`AttentionMode::with_seed`].
impl FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let value = |key: &str| -> Result<Fraction> {
            let p = param.ok_or_else(|| validation(format!("mode `{name}` needs `{key}=<f>`")))?;
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| validation(format!("expected `{key}=<f>` in `{s}`")))?;
            if k.trim() != key {
                return Err(validation(format!("unknown parameter `{k}` in `{s}`")));
            }
            v.parse()
        };
        let no_param = |m: AttentionMode| -> Result<Self> {
            match param {
                None => Ok(m),
                Some(_) => Err(validation(format!("mode `{name}` takes no parameters"))),
            }
        };
        match name {
            "dense" => no_param(Self::Dense),
            "samefreq" => no_param(Self::SameFreqOnly),
            "litefocus" => Ok(Self::LiteFocus {
                r: value("r")?,
                seed: 0,
            }),
            "componly" => Ok(Self::CompOnly {
                r: value("r")?,
                seed: 0,
            }),
            "tome" => Self::token_merge(value("ratio")?.value()),
            other => Err(validation(format!("unknown attention mode `{other}`"))),
        }
    }
}
