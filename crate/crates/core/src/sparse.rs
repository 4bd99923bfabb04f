//! Attention restricted to per-query focus sets.
//!
//! [`litefocus_attention_reference`] evaluates every query on its own,
//! gathering its focus set from scratch; it is the correctness oracle.
//! [`litefocus_attention_grouped`] exploits that all queries of one
//! frequency band share the same focus set: keys `[S_b ; C \ S_b]` are
//! gathered once per band and every query of the band runs against that
//! block.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::attention::{attend_row, check_qkv, RowScratch};
use crate::error::{validation, Error, Result};
use crate::focus::{build_focus_set, cross_frequency_sample, CompensationSet};
use crate::grid::Spectrogrid;
use crate::mode::AttentionMode;
use crate::par;
use crate::tensor::Tensor;

const ROW_BLOCK: usize = 8;

/// Rows `idx[0], idx[1], ...` of `t`, stacked.
pub fn gather_rows(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let (n, d) = t.shape2()?;
    if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
        return Err(validation(format!("row {bad} out of range for {n} rows")));
    }
    if idx.is_empty() {
        return Err(validation("cannot gather zero rows"));
    }
    Ok(Tensor::from_parts(vec![idx.len(), d], gather_flat(t.data(), d, idx)))
}

fn gather_flat(data: &[f32], d: usize, idx: &[usize]) -> Vec<f32> {
    let mut out = Vec::with_capacity(idx.len() * d);
    for &j in idx {
        out.extend_from_slice(&data[j * d..(j + 1) * d]);
    }
    out
}

/// The pieces of a focus-set mode: its compensation set and whether the
/// same-frequency band is included.
#[derive(Clone, Debug)]
pub struct FocusPlan {
    pub comp: CompensationSet,
    pub include_same_freq: bool,
}

impl FocusPlan {
    pub fn for_mode(grid: &Spectrogrid, mode: &AttentionMode) -> Result<Self> {
        let n = grid.n_tokens();
        let plan = match *mode {
            AttentionMode::LiteFocus { r, seed } => Self {
                comp: cross_frequency_sample(n, r, seed),
                include_same_freq: true,
            },
            AttentionMode::SameFreqOnly => Self {
                comp: CompensationSet::empty(n),
                include_same_freq: true,
            },
            AttentionMode::CompOnly { r, seed } => {
                let comp = cross_frequency_sample(n, r, seed);
                if comp.is_empty() {
                    return Err(Error::DegenerateFocus(format!(
                        "compensation-only attention with floor({r} * {n}) = 0 keys"
                    )));
                }
                Self {
                    comp,
                    include_same_freq: false,
                }
            }
            other => {
                return Err(validation(format!("`{other}` is not a focus-set mode")));
            }
        };
        Ok(plan)
    }

    /// Key order used by the grouped path for band `b`: the band's own
    /// tokens, then compensation tokens from other bands.
    pub fn band_keys(&self, grid: &Spectrogrid, b: usize) -> Vec<usize> {
        if !self.include_same_freq {
            return self.comp.indices().to_vec();
        }
        let mut keys = grid.band_tokens(b);
        keys.extend(self.comp.indices().iter().filter(|&&j| grid.band(j) != b));
        keys
    }

    /// `|F_i|` for a query in band `b`.
    pub fn band_focus_len(&self, grid: &Spectrogrid, b: usize) -> usize {
        if !self.include_same_freq {
            return self.comp.len();
        }
        grid.n_t() + self.comp.indices().iter().filter(|&&j| grid.band(j) != b).count()
    }
}

fn check_grid(q: &Tensor, k: &Tensor, v: &Tensor, grid: &Spectrogrid) -> Result<(usize, usize)> {
    let (nq, nk, d_k, d_v) = check_qkv(q, k, v)?;
    let n = grid.n_tokens();
    if nq != n || nk != n {
        return Err(validation(format!(
            "grid {grid} has {n} tokens, got {nq} queries and {nk} keys"
        )));
    }
    Ok((d_k, d_v))
}

/// Per-query evaluation: build `F_i`, gather, attend. The oracle path.
pub fn litefocus_attention_reference(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    grid: &Spectrogrid,
    mode: &AttentionMode,
) -> Result<Tensor> {
    let (d_k, d_v) = check_grid(q, k, v, grid)?;
    let plan = FocusPlan::for_mode(grid, mode)?;
    let scale = 1.0 / (d_k as f64).sqrt();
    let n = grid.n_tokens();
    let rows = par::map_range(n, |i| -> Result<Vec<f32>> {
        let focus = build_focus_set(grid, i, &plan.comp, plan.include_same_freq)?;
        let kf = gather_rows(k, &focus.indices)?;
        let vf = gather_rows(v, &focus.indices)?;
        let mut out = vec![0.0f32; d_v];
        attend_row(q.row(i), kf.data(), vf.data(), scale, &mut RowScratch::default(), &mut out);
        Ok(out)
    });
    let mut data = Vec::with_capacity(n * d_v);
    for r in rows {
        data.extend(r?);
    }
    Ok(Tensor::from_parts(vec![n, d_v], data))
}

/// Band-batched evaluation; numerically equivalent to the reference path.
pub fn litefocus_attention_grouped(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    grid: &Spectrogrid,
    mode: &AttentionMode,
) -> Result<Tensor> {
    litefocus_attention_grouped_counted(q, k, v, grid, mode).map(|(y, _)| y)
}

/// [`litefocus_attention_grouped`] that also reports how many query-key
/// scores the kernel actually evaluated.
pub fn litefocus_attention_grouped_counted(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    grid: &Spectrogrid,
    mode: &AttentionMode,
) -> Result<(Tensor, u64)> {
    let (d_k, d_v) = check_grid(q, k, v, grid)?;
    let plan = FocusPlan::for_mode(grid, mode)?;
    let scale = 1.0 / (d_k as f64).sqrt();
    let n = grid.n_tokens();
    // Compensation-only queries all share one key block.
    let groups = if plan.include_same_freq { grid.n_f() } else { 1 };
    let blocks: Vec<(Vec<f32>, Vec<f32>)> = par::map_range(groups, |b| {
        let keys = plan.band_keys(grid, b);
        (gather_flat(k.data(), d_k, &keys), gather_flat(v.data(), d_v, &keys))
    });
    let evaluated = AtomicU64::new(0);
    let mut out = vec![0.0f32; n * d_v];
    par::for_each_chunk_mut(&mut out, d_v * ROW_BLOCK, |blk, chunk| {
        let mut scratch = RowScratch::default();
        let mut local = 0u64;
        for (r, dst) in chunk.chunks_mut(d_v).enumerate() {
            let i = blk * ROW_BLOCK + r;
            let (kb, vb) = &blocks[if groups == 1 { 0 } else { grid.band(i) }];
            local += attend_row(q.row(i), kb, vb, scale, &mut scratch, dst) as u64;
        }
        evaluated.fetch_add(local, Ordering::Relaxed);
    });
    Ok((Tensor::from_parts(vec![n, d_v], out), evaluated.into_inner()))
}

/// Number of (query, key) score evaluations one head performs under `mode`.
pub fn attended_pair_count(grid: &Spectrogrid, mode: &AttentionMode) -> Result<u64> {
    let n = grid.n_tokens() as u64;
    Ok(match *mode {
        AttentionMode::Dense => n * n,
        AttentionMode::SameFreqOnly => n * grid.n_t() as u64,
        AttentionMode::CompOnly { r, .. } => n * r.floor_mul(grid.n_tokens()) as u64,
        AttentionMode::LiteFocus { .. } => {
            let plan = FocusPlan::for_mode(grid, mode)?;
            // Every band holds n_t queries sharing one focus set.
            let mut outside = vec![plan.comp.len() as u64; grid.n_f()];
            for &j in plan.comp.indices() {
                outside[grid.band(j)] -= 1;
            }
            outside
                .iter()
                .map(|&o| grid.n_t() as u64 * (grid.n_t() as u64 + o))
                .sum()
        }
        AttentionMode::TokenMerge { ratio } => {
            let kept = n - ratio.floor_mul(grid.n_tokens()) as u64;
            kept * kept
        }
    })
}
