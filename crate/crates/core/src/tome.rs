//! Token-merging baseline: bipartite soft matching, mean merge, and
//! duplication unmerge around dense attention.
//!
//! Tokens alternate into set A (even indices) and set B (odd indices).
//! Each A token finds its most cosine-similar B token; the
//! `floor(ratio * N)` best-matched A tokens are folded into their partners.

use crate::attention::{dense_attention, dot};
use crate::error::{shape, validation, Result};
use crate::fraction::Fraction;
use crate::par;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergePlan {
    /// Surviving tokens, ascending.
    pub keep: Vec<usize>,
    /// Representative (a member of `keep`) for every original token.
    pub assignment: Vec<usize>,
    pub merged_count: usize,
}

impl MergePlan {
    pub fn identity(n: usize) -> Self {
        Self {
            keep: (0..n).collect(),
            assignment: (0..n).collect(),
            merged_count: 0,
        }
    }

    /// Plan from an explicit assignment; survivors are the tokens that map
    /// to themselves.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        let n = assignment.len();
        for (i, &t) in assignment.iter().enumerate() {
            if t >= n || assignment[t] != t {
                return Err(validation(format!(
                    "token {i} maps to {t}, which is not a surviving token"
                )));
            }
        }
        let keep: Vec<usize> = (0..n).filter(|&i| assignment[i] == i).collect();
        Ok(Self {
            merged_count: n - keep.len(),
            keep,
            assignment,
        })
    }

    pub fn n_tokens(&self) -> usize {
        self.assignment.len()
    }

    /// Position of each original token's representative within `keep`.
    fn slots(&self) -> Vec<usize> {
        let mut pos = vec![usize::MAX; self.n_tokens()];
        for (s, &k) in self.keep.iter().enumerate() {
            pos[k] = s;
        }
        self.assignment.iter().map(|&a| pos[a]).collect()
    }
}

fn cosine(a: &[f32], b: &[f32], na: f64, nb: f64) -> f64 {
    let denom = na * nb;
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

pub fn bipartite_soft_matching(k: &Tensor, merge_ratio: Fraction) -> Result<MergePlan> {
    let (n, _) = k.shape2()?;
    if n < 2 {
        return Err(validation("token merging needs at least two tokens"));
    }
    if merge_ratio.value() >= 0.5 {
        return Err(validation(format!("merge ratio must be < 0.5, got {merge_ratio}")));
    }
    let m = merge_ratio.floor_mul(n);
    if m == 0 {
        return Ok(MergePlan::identity(n));
    }
    let norms: Vec<f64> = (0..n).map(|i| dot(k.row(i), k.row(i)).sqrt()).collect();
    let set_a: Vec<usize> = (0..n).step_by(2).collect();
    let set_b: Vec<usize> = (1..n).step_by(2).collect();
    // (best similarity, partner) per A token; the first maximum wins ties.
    let best: Vec<(f64, usize)> = par::map_range(set_a.len(), |ai| {
        let a = set_a[ai];
        let mut top = (f64::NEG_INFINITY, usize::MAX);
        for &b in &set_b {
            let s = cosine(k.row(a), k.row(b), norms[a], norms[b]);
            if s > top.0 {
                top = (s, b);
            }
        }
        top
    });
    let mut order: Vec<usize> = (0..set_a.len()).collect();
    order.sort_by(|&x, &y| best[y].0.total_cmp(&best[x].0).then(set_a[x].cmp(&set_a[y])));
    let mut assignment: Vec<usize> = (0..n).collect();
    for &ai in &order[..m] {
        assignment[set_a[ai]] = best[ai].1;
    }
    MergePlan::from_assignment(assignment)
}

/// Each surviving row becomes the unweighted mean of the rows assigned to it.
pub fn apply_merge(t: &Tensor, plan: &MergePlan) -> Result<Tensor> {
    let (n, d) = t.shape2()?;
    if n != plan.n_tokens() {
        return Err(shape(format!("tensor has {n} rows, plan covers {}", plan.n_tokens())));
    }
    let slots = plan.slots();
    let mut sums = vec![0.0f64; plan.keep.len() * d];
    let mut counts = vec![0u32; plan.keep.len()];
    for (i, &s) in slots.iter().enumerate() {
        counts[s] += 1;
        for (acc, &x) in sums[s * d..(s + 1) * d].iter_mut().zip(t.row(i)) {
            *acc += x as f64;
        }
    }
    let data = sums
        .chunks(d)
        .zip(&counts)
        .flat_map(|(row, &c)| row.iter().map(move |&v| (v / c as f64) as f32))
        .collect();
    Ok(Tensor::from_parts(vec![plan.keep.len(), d], data))
}

/// Row `i` of the output is the surviving row for token `i`.
pub fn unmerge(t: &Tensor, plan: &MergePlan) -> Result<Tensor> {
    let (m, d) = t.shape2()?;
    if m != plan.keep.len() {
        return Err(shape(format!("tensor has {m} rows, plan keeps {}", plan.keep.len())));
    }
    let data = plan
        .slots()
        .into_iter()
        .flat_map(|s| t.row(s).iter().copied())
        .collect();
    Ok(Tensor::from_parts(vec![plan.n_tokens(), d], data))
}

/// Plan from `k`, merge `q, k, v`, dense attention, unmerge to `N` rows.
pub fn tome_attention(q: &Tensor, k: &Tensor, v: &Tensor, merge_ratio: Fraction) -> Result<Tensor> {
    let plan = bipartite_soft_matching(k, merge_ratio)?;
    if plan.merged_count == 0 {
        return dense_attention(q, k, v);
    }
    let y = dense_attention(&apply_merge(q, &plan)?, &apply_merge(k, &plan)?, &apply_merge(v, &plan)?)?;
    unmerge(&y, &plan)
}

/// Score evaluations of [`tome_attention`] on `n` tokens.
pub fn tome_pair_count(n: usize, merge_ratio: Fraction) -> u64 {
    let kept = (n - merge_ratio.floor_mul(n)) as u64;
    kept * kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{random_tensor, Distribution};

    fn frac(x: f64) -> Fraction {
        Fraction::from_f64(x).unwrap()
    }

    #[test]
    fn zero_ratio_is_identity() {
        let k = random_tensor(&[10, 4], 1, Distribution::StandardNormal).unwrap();
        assert_eq!(bipartite_soft_matching(&k, Fraction::ZERO).unwrap(), MergePlan::identity(10));
        assert!(bipartite_soft_matching(&k, frac(0.5)).is_err());
        let one = random_tensor(&[1, 4], 1, Distribution::StandardNormal).unwrap();
        assert!(bipartite_soft_matching(&one, frac(0.1)).is_err());
    }

    #[test]
    fn duplicate_rows_merge_first() {
        let mut data = random_tensor(&[10, 4], 5, Distribution::StandardNormal)
            .unwrap()
            .into_data();
        let row0: Vec<f32> = data[..4].to_vec();
        data[4..8].copy_from_slice(&row0);
        let k = Tensor::matrix(10, 4, data).unwrap();
        // floor(0.1 * 10) = 1 merge.
        let plan = bipartite_soft_matching(&k, frac(0.1)).unwrap();
        assert_eq!(plan.merged_count, 1);
        assert_eq!(plan.assignment[0], 1);
        assert_eq!(plan.keep.len(), 9);
        assert!(!plan.keep.contains(&0));
    }

    #[test]
    fn merge_and_unmerge_examples() {
        let t = Tensor::matrix(2, 1, vec![2.0, 4.0]).unwrap();
        let plan = MergePlan::from_assignment(vec![1, 1]).unwrap();
        let merged = apply_merge(&t, &plan).unwrap();
        assert_eq!(merged.data(), &[3.0]);
        assert_eq!(unmerge(&merged, &plan).unwrap().data(), &[3.0, 3.0]);

        let id = MergePlan::identity(2);
        assert!(apply_merge(&t, &id).unwrap().bit_eq(&t));
        assert!(unmerge(&t, &id).unwrap().bit_eq(&t));

        let constant = Tensor::matrix(4, 2, vec![1.5, -2.0, 1.5, -2.0, 1.5, -2.0, 1.5, -2.0]).unwrap();
        let plan = MergePlan::from_assignment(vec![1, 1, 3, 3]).unwrap();
        assert!(unmerge(&apply_merge(&constant, &plan).unwrap(), &plan).unwrap().bit_eq(&constant));
        assert!(MergePlan::from_assignment(vec![1, 0]).is_err());
        assert!(apply_merge(&constant, &MergePlan::identity(3)).is_err());
    }

    #[test]
    fn tome_zero_ratio_is_dense_bitwise() {
        let g = |s| random_tensor(&[12, 4], s, Distribution::StandardNormal).unwrap();
        let (q, k, v) = (g(1), g(2), g(3));
        let dense = dense_attention(&q, &k, &v).unwrap();
        assert!(tome_attention(&q, &k, &v, Fraction::ZERO).unwrap().bit_eq(&dense));
    }

    #[test]
    fn tome_on_identical_tokens_is_lossless() {
        let row = [0.3f32, -1.2, 0.7];
        let t = Tensor::matrix(8, 3, row.repeat(8)).unwrap();
        let dense = dense_attention(&t, &t, &t).unwrap();
        for r in [0.1, 0.25, 0.4] {
            let y = tome_attention(&t, &t, &t, frac(r)).unwrap();
            assert_eq!(y.dims(), &[8, 3]);
            for (a, b) in y.data().iter().zip(dense.data()) {
                assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn pair_count_decreases() {
        assert_eq!(tome_pair_count(100, frac(0.25)), 75 * 75);
        let counts: Vec<u64> = [0.0, 0.1, 0.2, 0.3, 0.4]
            .iter()
            .map(|&r| tome_pair_count(100, frac(r)))
            .collect();
        assert!(counts.windows(2).all(|w| w[1] < w[0]));
    }
}
