//! Dense scaled-dot-product attention, projections, and the row kernel
//! shared by every attention variant.
//!
//! Dot products accumulate binary32 products in binary64 over four fixed
//! lanes; softmax and the value reduction also run in binary64. The
//! reduction order depends only on the key order, never on thread count.

use crate::error::{shape, validation, Result};
use crate::par;
use crate::tensor::Tensor;

/// Query rows handed to one parallel work item.
const ROW_BLOCK: usize = 8;

/// Query/key/value projections (each `channels x d_model`) split into
/// `heads` contiguous slices of width `d_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionWeights {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    heads: usize,
}

impl ProjectionWeights {
    pub fn new(w_q: Tensor, w_k: Tensor, w_v: Tensor, heads: usize) -> Result<Self> {
        let (c, d) = w_q.shape2()?;
        for (name, w) in [("w_k", &w_k), ("w_v", &w_v)] {
            if w.shape2()? != (c, d) {
                return Err(shape(format!(
                    "{name} is {:?}, expected [{c}, {d}] like w_q",
                    w.dims()
                )));
            }
        }
        if heads == 0 || d % heads != 0 {
            return Err(validation(format!(
                "d_model {d} is not divisible by heads {heads}"
            )));
        }
        Ok(Self { w_q, w_k, w_v, heads })
    }

    pub fn channels(&self) -> usize {
        self.w_q.dims()[0]
    }

    pub fn d_model(&self) -> usize {
        self.w_q.dims()[1]
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn d_k(&self) -> usize {
        self.d_model() / self.heads
    }
}

/// Four-lane binary64 dot product of binary32 slices.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        lanes[0] += x[0] as f64 * y[0] as f64;
        lanes[1] += x[1] as f64 * y[1] as f64;
        lanes[2] += x[2] as f64 * y[2] as f64;
        lanes[3] += x[3] as f64 * y[3] as f64;
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x as f64 * *y as f64;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// `x @ w` for `x: n x c`, `w: c x d`.
pub fn matmul(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (n, c) = x.shape2()?;
    let (c2, d) = w.shape2()?;
    if c != c2 {
        return Err(shape(format!("cannot multiply {n}x{c} by {c2}x{d}")));
    }
    let (xs, ws) = (x.data(), w.data());
    let mut out = vec![0.0f32; n * d];
    par::for_each_chunk_mut(&mut out, d * ROW_BLOCK, |blk, chunk| {
        let mut acc = vec![0.0f64; d];
        for (r, out_row) in chunk.chunks_mut(d).enumerate() {
            let i = blk * ROW_BLOCK + r;
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (kk, &xv) in xs[i * c..(i + 1) * c].iter().enumerate() {
                let xv = xv as f64;
                for (a, &wv) in acc.iter_mut().zip(&ws[kk * d..(kk + 1) * d]) {
                    *a += xv * wv as f64;
                }
            }
            for (o, a) in out_row.iter_mut().zip(&acc) {
                *o = *a as f32;
            }
        }
    });
    Ok(Tensor::from_parts(vec![n, d], out))
}

/// `(x W_q, x W_k, x W_v)`.
pub fn project_qkv(x: &Tensor, w: &ProjectionWeights) -> Result<(Tensor, Tensor, Tensor)> {
    let (_, c) = x.shape2()?;
    if c != w.channels() {
        return Err(shape(format!(
            "input has {c} channels, projections expect {}",
            w.channels()
        )));
    }
    Ok((matmul(x, &w.w_q)?, matmul(x, &w.w_k)?, matmul(x, &w.w_v)?))
}

/// In-place softmax over binary64 logits with max subtraction.
pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    let inv = 1.0 / sum;
    logits.iter_mut().for_each(|l| *l *= inv);
}

/// Softmax of one row; NaN input is rejected.
pub fn stable_softmax(row: &[f32]) -> Result<Vec<f32>> {
    if row.is_empty() {
        return Err(validation("softmax of an empty row"));
    }
    if row.iter().any(|v| v.is_nan()) {
        return Err(validation("NaN in softmax input"));
    }
    let mut buf: Vec<f64> = row.iter().map(|&v| v as f64).collect();
    softmax_in_place(&mut buf);
    Ok(buf.into_iter().map(|v| v as f32).collect())
}

/// Row-wise softmax of a matrix.
pub fn stable_row_softmax(m: &Tensor) -> Result<Tensor> {
    let (r, c) = m.shape2()?;
    let mut out = vec![0.0f32; r * c];
    par::for_each_chunk_mut(&mut out, c, |i, dst| {
        let mut buf: Vec<f64> = m.row(i).iter().map(|&v| v as f64).collect();
        softmax_in_place(&mut buf);
        for (o, b) in dst.iter_mut().zip(buf) {
            *o = b as f32;
        }
    });
    Ok(Tensor::from_parts(vec![r, c], out))
}

/// Scratch buffers reused across rows of one work item.
#[derive(Default)]
pub(crate) struct RowScratch {
    pub scores: Vec<f64>,
    pub acc: Vec<f64>,
}

/// One query against a contiguous key/value block (`m x d_k`, `m x d_v`),
/// writing `softmax(q K^T * scale) V` into `out`. Keys are visited in
/// storage order. Returns the number of scores evaluated.
pub(crate) fn attend_row(
    query: &[f32],
    keys: &[f32],
    values: &[f32],
    scale: f64,
    scratch: &mut RowScratch,
    out: &mut [f32],
) -> usize {
    let d_k = query.len();
    let d_v = out.len();
    let m = keys.len() / d_k;
    debug_assert!(m > 0);
    scratch.scores.clear();
    scratch
        .scores
        .extend(keys.chunks_exact(d_k).map(|k| dot(query, k) * scale));
    softmax_in_place(&mut scratch.scores);
    scratch.acc.clear();
    scratch.acc.resize(d_v, 0.0);
    for (&w, v) in scratch.scores.iter().zip(values.chunks_exact(d_v)) {
        for (a, &x) in scratch.acc.iter_mut().zip(v) {
            *a += w * x as f64;
        }
    }
    for (o, a) in out.iter_mut().zip(&scratch.acc) {
        *o = *a as f32;
    }
    m
}

pub(crate) fn check_qkv(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let (nq, dq) = q.shape2()?;
    let (nk, dk) = k.shape2()?;
    let (nv, dv) = v.shape2()?;
    if dq != dk {
        return Err(shape(format!("query width {dq} != key width {dk}")));
    }
    if nk != nv {
        return Err(shape(format!("{nk} keys but {nv} values")));
    }
    Ok((nq, nk, dk, dv))
}

/// `softmax(Q K^T / sqrt(d_k)) V`.
pub fn dense_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (nq, _, d_k, d_v) = check_qkv(q, k, v)?;
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut out = vec![0.0f32; nq * d_v];
    par::for_each_chunk_mut(&mut out, d_v * ROW_BLOCK, |blk, chunk| {
        let mut scratch = RowScratch::default();
        for (r, dst) in chunk.chunks_mut(d_v).enumerate() {
            let i = blk * ROW_BLOCK + r;
            attend_row(q.row(i), k.data(), v.data(), scale, &mut scratch, dst);
        }
    });
    Ok(Tensor::from_parts(vec![nq, d_v], out))
}

/// Columns `[h * width, (h + 1) * width)` of each row, for every head `h`.
pub fn split_heads(t: &Tensor, heads: usize) -> Result<Vec<Tensor>> {
    let (n, d) = t.shape2()?;
    if heads == 0 || d % heads != 0 {
        return Err(validation(format!("width {d} not divisible by {heads} heads")));
    }
    let w = d / heads;
    Ok((0..heads)
        .map(|h| {
            let data = (0..n)
                .flat_map(|i| t.row(i)[h * w..(h + 1) * w].iter().copied())
                .collect();
            Tensor::from_parts(vec![n, w], data)
        })
        .collect())
}

/// Inverse of [`split_heads`].
pub fn concat_heads(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| validation("no heads to concatenate"))?;
    let (n, w) = first.shape2()?;
    for p in parts {
        if p.shape2()? != (n, w) {
            return Err(shape("heads have differing shapes"));
        }
    }
    let mut data = Vec::with_capacity(n * w * parts.len());
    for i in 0..n {
        for p in parts {
            data.extend_from_slice(p.row(i));
        }
    }
    Ok(Tensor::from_parts(vec![n, w * parts.len()], data))
}

/// Projects `x`, applies `kernel` to each head's `(q, k, v)` slice, and
/// concatenates the head outputs. Heads run in order.
pub fn multi_head_attention<F>(x: &Tensor, w: &ProjectionWeights, kernel: F) -> Result<Tensor>
where
    F: Fn(&Tensor, &Tensor, &Tensor) -> Result<Tensor>,
{
    let (q, k, v) = project_qkv(x, w)?;
    heads_apply(&q, &k, &v, w.heads(), kernel)
}

/// Per-head application on already-projected tensors.
pub fn heads_apply<F>(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize, kernel: F) -> Result<Tensor>
where
    F: Fn(&Tensor, &Tensor, &Tensor) -> Result<Tensor>,
{
    if heads == 1 {
        return kernel(q, k, v);
    }
    let (qs, ks, vs) = (split_heads(q, heads)?, split_heads(k, heads)?, split_heads(v, heads)?);
    let outs = qs
        .iter()
        .zip(&ks)
        .zip(&vs)
        .map(|((q, k), v)| kernel(q, k, v))
        .collect::<Result<Vec<_>>>()?;
    concat_heads(&outs)
}
