//! Focus sets: which keys each query attends to.
//!
//! A query's focus set is the union of its same-frequency band and one
//! compensation set shared by every query of an attention call. The
//! compensation set is `floor(r * N)` token indices drawn uniformly without
//! replacement.

use std::collections::HashMap;

use crate::error::{validation, Result};
use crate::fraction::Fraction;
use crate::grid::Spectrogrid;
use crate::rng::SeededRng;

/// Sorted, unique sample of `floor(r * n_tokens)` indices from `[0, n_tokens)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompensationSet {
    indices: Vec<usize>,
    n_tokens: usize,
    r: Fraction,
    seed: u64,
}

impl CompensationSet {
    /// The empty set over `n_tokens` tokens (`r = 0`).
    pub fn empty(n_tokens: usize) -> Self {
        Self {
            indices: Vec::new(),
            n_tokens,
            r: Fraction::ZERO,
            seed: 0,
        }
    }

    /// Explicit index list, mainly for tests and externally chosen sets.
    pub fn from_indices(n_tokens: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&j| j >= n_tokens) {
            return Err(validation(format!("index {bad} out of range for {n_tokens} tokens")));
        }
        let r = Fraction::from_ratio(indices.len() as u64, n_tokens.max(1) as u64)?;
        Ok(Self {
            indices,
            n_tokens,
            r,
            seed: 0,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn r(&self) -> Fraction {
        self.r
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Draws the compensation set with a partial Fisher-Yates shuffle over a
/// virtual `[0, n_tokens)` array (only displaced slots are stored), then sorts.
pub fn cross_frequency_sample(n_tokens: usize, r: Fraction, seed: u64) -> CompensationSet {
    let k = r.floor_mul(n_tokens);
    let mut rng = SeededRng::new(seed);
    let mut displaced: HashMap<usize, usize> = HashMap::with_capacity(2 * k);
    let mut indices = Vec::with_capacity(k);
    for i in 0..k {
        let j = i + rng.below((n_tokens - i) as u64) as usize;
        let at_j = *displaced.get(&j).unwrap_or(&j);
        let at_i = *displaced.get(&i).unwrap_or(&i);
        displaced.insert(j, at_i);
        indices.push(at_j);
    }
    indices.sort_unstable();
    CompensationSet {
        indices,
        n_tokens,
        r,
        seed,
    }
}

/// [`cross_frequency_sample`] taking `r` as a float; rejects `r` outside `[0, 1]`.
pub fn cross_frequency_sample_f64(n_tokens: usize, r: f64, seed: u64) -> Result<CompensationSet> {
    if !(0.0..=1.0).contains(&r) {
        return Err(validation(format!("r must lie in [0, 1], got {r}")));
    }
    Ok(cross_frequency_sample(n_tokens, Fraction::from_f64(r)?, seed))
}

/// Sorted, unique key indices for one query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FocusSet {
    pub indices: Vec<usize>,
    pub owner: usize,
}

impl FocusSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }
}

/// Merges two ascending unique lists into their ascending union.
pub(crate) fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

pub fn build_focus_set(
    grid: &Spectrogrid,
    i: usize,
    comp: &CompensationSet,
    include_same_freq: bool,
) -> Result<FocusSet> {
    grid.check_token(i)?;
    if comp.n_tokens() != grid.n_tokens() {
        return Err(validation(format!(
            "compensation set covers {} tokens, grid has {}",
            comp.n_tokens(),
            grid.n_tokens()
        )));
    }
    let indices = if include_same_freq {
        sorted_union(&grid.band_tokens(grid.band(i)), comp.indices())
    } else {
        comp.indices().to_vec()
    };
    Ok(FocusSet { indices, owner: i })
}

/// Expected `|S_i ∪ C|` under uniform sampling:
/// `n_t + k - k * n_t / N` with `k = floor(r * N)`.
pub fn expected_focus_size(grid: &Spectrogrid, r: Fraction) -> f64 {
    let n = grid.n_tokens() as f64;
    let n_t = grid.n_t() as f64;
    let k = r.floor_mul(grid.n_tokens()) as f64;
    n_t + k - k * n_t / n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frac(s: &str) -> Fraction {
        s.parse().unwrap()
    }

    #[test]
    fn sample_sizes() {
        assert!(cross_frequency_sample(10, frac("0"), 1).is_empty());
        assert_eq!(cross_frequency_sample(10, frac("0.25"), 1).len(), 2);
        assert_eq!(
            cross_frequency_sample(10, frac("1"), 1).indices(),
            &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
        );
        assert!(cross_frequency_sample_f64(10, 1.5, 0).is_err());
        assert!(cross_frequency_sample_f64(10, -0.1, 0).is_err());
    }

    #[test]
    fn sample_is_sorted_unique_and_deterministic() {
        for seed in 0..50 {
            let c = cross_frequency_sample(97, frac("0.4"), seed);
            assert_eq!(c.len(), 38);
            assert!(c.indices().windows(2).all(|w| w[0] < w[1]));
            assert!(c.indices().iter().all(|&j| j < 97));
            assert_eq!(c, cross_frequency_sample(97, frac("0.4"), seed));
        }
    }

    #[test]
    fn sample_is_uniform() {
        // Each index should appear with probability k / n.
        let (n, trials) = (20, 20_000);
        let mut hits = vec![0u32; n];
        for seed in 0..trials {
            for &j in cross_frequency_sample(n, frac("0.25"), seed).indices() {
                hits[j] += 1;
            }
        }
        let expect = trials as f64 * 5.0 / 20.0;
        let sd = (trials as f64 * 0.25 * 0.75).sqrt();
        for h in hits {
            assert!((h as f64 - expect).abs() < 5.0 * sd, "{h} vs {expect}");
        }
    }

    #[test]
    fn focus_set_examples() {
        let g = Spectrogrid::new(3, 2).unwrap();
        let c = CompensationSet::from_indices(6, vec![1]).unwrap();
        assert_eq!(build_focus_set(&g, 0, &c, true).unwrap().indices, vec![0, 1, 2, 4]);
        let empty = CompensationSet::empty(6);
        assert_eq!(
            build_focus_set(&g, 3, &empty, true).unwrap().indices,
            g.same_frequency_set(3).unwrap()
        );
        let c = CompensationSet::from_indices(6, vec![3, 5]).unwrap();
        for i in 0..6 {
            assert_eq!(build_focus_set(&g, i, &c, false).unwrap().indices, vec![3, 5]);
        }
        assert!(build_focus_set(&g, 6, &c, true).is_err());
        assert!(CompensationSet::from_indices(6, vec![6]).is_err());
    }

    #[test]
    fn full_compensation_gives_everything() {
        let g = Spectrogrid::new(4, 3).unwrap();
        let c = cross_frequency_sample(12, Fraction::ONE, 5);
        for i in 0..12 {
            let f = build_focus_set(&g, i, &c, true).unwrap();
            assert_eq!(f.indices, (0..12).collect::<Vec<_>>());
        }
    }

    #[test]
    fn expected_size_examples() {
        let g = Spectrogrid::new(256, 16).unwrap();
        assert_eq!(expected_focus_size(&g, Fraction::ZERO), 256.0);
        assert_eq!(expected_focus_size(&g, Fraction::ONE), 4096.0);
        let e = expected_focus_size(&g, frac("0.1"));
        assert!((e - (256.0 + 409.0 - 409.0 * 256.0 / 4096.0)).abs() < 1e-9);
        assert!((e / 4096.0 - 0.1561).abs() < 1e-4);
    }

    #[test]
    fn union_merges() {
        assert_eq!(sorted_union(&[0, 2, 4], &[1, 2, 5]), vec![0, 1, 2, 4, 5]);
        assert_eq!(sorted_union(&[], &[3]), vec![3]);
    }
}
