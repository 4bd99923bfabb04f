//! Same-frequency attention statistics and heatmap export.
//!
//! The headline number is the *frequency lift*: the mean fraction of a
//! query's attention mass that lands on its own frequency band, divided by
//! the `1 / n_f` a uniform map would give. Lift 1 means no preference; lift
//! `n_f` means all mass stays within the band.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::attention::{dot, softmax_in_place};
use crate::error::{shape, validation, Result};
use crate::grid::Spectrogrid;
use crate::par;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

const ROW_SUM_TOL: f64 = 1e-4;

/// Row-stochastic `softmax(Q K^T / sqrt(d_k))`.
pub fn attention_map(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    let (nq, dq) = q.shape2()?;
    let (nk, dk) = k.shape2()?;
    if dq != dk {
        return Err(shape(format!("query width {dq} != key width {dk}")));
    }
    let scale = 1.0 / (dk as f64).sqrt();
    let mut out = vec![0.0f32; nq * nk];
    par::for_each_chunk_mut(&mut out, nk, |i, dst| {
        let mut logits: Vec<f64> = k
            .data()
            .chunks_exact(dk)
            .map(|kr| dot(q.row(i), kr) * scale)
            .collect();
        softmax_in_place(&mut logits);
        for (o, l) in dst.iter_mut().zip(logits) {
            *o = l as f32;
        }
    });
    Ok(Tensor::from_parts(vec![nq, nk], out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyMass {
    /// Same-band attention mass of every query.
    pub per_query: Vec<f64>,
    pub mean: f64,
}

fn check_map(attn: &Tensor, grid: &Spectrogrid) -> Result<usize> {
    let (r, c) = attn.shape2()?;
    let n = grid.n_tokens();
    if r != n || c != n {
        return Err(shape(format!("attention map is {r}x{c}, grid {grid} has {n} tokens")));
    }
    Ok(n)
}

pub fn same_frequency_mass(attn: &Tensor, grid: &Spectrogrid) -> Result<FrequencyMass> {
    let n = check_map(attn, grid)?;
    let mut per_query = Vec::with_capacity(n);
    for i in 0..n {
        let row = attn.row(i);
        let total: f64 = row.iter().map(|&v| v as f64).sum();
        if (total - 1.0).abs() > ROW_SUM_TOL {
            return Err(validation(format!("row {i} sums to {total}, not 1")));
        }
        let band = grid.band(i);
        let same: f64 = row[band..].iter().step_by(grid.n_f()).map(|&v| v as f64).sum();
        per_query.push(same);
    }
    let mean = per_query.iter().sum::<f64>() / n as f64;
    Ok(FrequencyMass { per_query, mean })
}

pub fn frequency_lift(attn: &Tensor, grid: &Spectrogrid) -> Result<f64> {
    Ok(same_frequency_mass(attn, grid)?.mean * grid.n_f() as f64)
}

/// Logits fed to [`synthesize_attention`] before the band bonus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LogitSource {
    /// Every logit zero.
    Constant,
    /// Independent standard normals from the seed.
    Random { seed: u64 },
}

/// Softmax of `logits + bias * [same band]`, row by row.
pub fn synthesize_attention(grid: &Spectrogrid, bias: f64, source: LogitSource) -> Result<Tensor> {
    if !(bias.is_finite() && bias >= 0.0) {
        return Err(validation(format!("bias must be finite and >= 0, got {bias}")));
    }
    let n = grid.n_tokens();
    let mut rng = match source {
        LogitSource::Random { seed } => Some(SeededRng::new(seed)),
        LogitSource::Constant => None,
    };
    let mut out = Vec::with_capacity(n * n);
    let mut logits = vec![0.0f64; n];
    for i in 0..n {
        let band = grid.band(i);
        for (j, l) in logits.iter_mut().enumerate() {
            let base = rng.as_mut().map_or(0.0, |r| r.standard_normal());
            *l = base + if grid.band(j) == band { bias } else { 0.0 };
        }
        softmax_in_place(&mut logits);
        out.extend(logits.iter().map(|&p| p as f32));
    }
    Ok(Tensor::from_parts(vec![n, n], out))
}

/// Random-logit map with same-band bonus `bias`.
pub fn synthesize_biased_attention(grid: &Spectrogrid, bias: f64, seed: u64) -> Result<Tensor> {
    synthesize_attention(grid, bias, LogitSource::Random { seed })
}

/// Lift of the constant-logit map with band bonus `bias`:
/// `n_t e^bias / (n_t e^bias + N - n_t) * n_f`.
pub fn closed_form_lift(grid: &Spectrogrid, bias: f64) -> f64 {
    let n_t = grid.n_t() as f64;
    let n = grid.n_tokens() as f64;
    let boosted = n_t * bias.exp();
    boosted / (boosted + n - n_t) * grid.n_f() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftSummary {
    pub lift: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean lift with a percentile-bootstrap 95% interval over queries.
pub fn lift_with_interval(
    mass: &FrequencyMass,
    n_f: usize,
    resamples: usize,
    seed: u64,
) -> LiftSummary {
    let n = mass.per_query.len();
    let scale = n_f as f64;
    let mut rng = SeededRng::new(seed);
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| {
            let s: f64 = (0..n).map(|_| mass.per_query[rng.below(n as u64) as usize]).sum();
            s / n as f64 * scale
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let pick = |p: f64| means[((p * (means.len() - 1) as f64).round() as usize).min(means.len() - 1)];
    LiftSummary {
        lift: mass.mean * scale,
        ci_low: pick(0.025),
        ci_high: pick(0.975),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeatmapFormat {
    /// Binary 8-bit grayscale (P5), min-max normalized.
    Pgm,
    /// Full-precision values, CRLF row terminators.
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeatmapLayout {
    /// Token order as stored.
    Raw,
    /// Rows and columns reordered band by band, so each band is a
    /// contiguous horizontal strip and same-band attention sits on the
    /// block diagonal.
    FrequencyGrouped,
}

/// Tokens listed band 0 first, then band 1, and so on.
pub fn frequency_grouped_order(grid: &Spectrogrid) -> Vec<usize> {
    (0..grid.n_f()).flat_map(|b| grid.band_tokens(b)).collect()
}

/// `attn` with rows and columns permuted by `order`.
pub fn permute_map(attn: &Tensor, order: &[usize]) -> Result<Tensor> {
    let (r, c) = attn.shape2()?;
    if r != c || order.len() != r {
        return Err(shape("permutation must match a square map"));
    }
    let data = order
        .iter()
        .flat_map(|&i| order.iter().map(move |&j| attn.row(i)[j]))
        .collect();
    Ok(Tensor::from_parts(vec![r, c], data))
}

pub fn encode_pgm(m: &Tensor) -> Result<Vec<u8>> {
    let (r, c) = m.shape2()?;
    let (lo, hi) = m
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo) as f64;
    let mut out = format!("P5\n{c} {r}\n255\n").into_bytes();
    out.extend(m.data().iter().map(|&v| {
        if span > 0.0 {
            (((v - lo) as f64 / span) * 255.0).round() as u8
        } else {
            0
        }
    }));
    Ok(out)
}

pub fn encode_csv(m: &Tensor) -> Result<Vec<u8>> {
    let (r, _) = m.shape2()?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    for i in 0..r {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn read_csv_matrix(path: impl AsRef<Path>) -> Result<Tensor> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for rec in rdr.records() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(shape(format!("row {rows} has {} fields", rec.len())));
        }
        for f in rec.iter() {
            data.push(f.parse::<f32>().map_err(|e| validation(format!("`{f}`: {e}")))?);
        }
        rows += 1;
    }
    Tensor::matrix(rows, cols.unwrap_or(0), data)
}

pub fn export_heatmap(
    attn: &Tensor,
    grid: Option<&Spectrogrid>,
    path: impl AsRef<Path>,
    format: HeatmapFormat,
    layout: HeatmapLayout,
) -> Result<()> {
    let permuted;
    let m = match layout {
        HeatmapLayout::Raw => attn,
        HeatmapLayout::FrequencyGrouped => {
            let grid = grid.ok_or_else(|| validation("grouped layout needs a grid"))?;
            check_map(attn, grid)?;
            permuted = permute_map(attn, &frequency_grouped_order(grid))?;
            &permuted
        }
    };
    let bytes = match format {
        HeatmapFormat::Pgm => encode_pgm(m)?,
        HeatmapFormat::Csv => encode_csv(m)?,
    };
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::dense_attention;
    use crate::tensor::{random_tensor, Distribution};

    fn uniform(n: usize) -> Tensor {
        Tensor::matrix(n, n, vec![1.0 / n as f32; n * n]).unwrap()
    }

    fn band_only(grid: &Spectrogrid) -> Tensor {
        let n = grid.n_tokens();
        let p = 1.0 / grid.n_t() as f32;
        let data = (0..n)
            .flat_map(|i| (0..n).map(move |j| if grid.band(i) == grid.band(j) { p } else { 0.0 }))
            .collect();
        Tensor::matrix(n, n, data).unwrap()
    }

    #[test]
    fn map_examples() {
        let q = Tensor::zeros(&[5, 3]).unwrap();
        let k = random_tensor(&[5, 3], 1, Distribution::StandardNormal).unwrap();
        let a = attention_map(&q, &k).unwrap();
        assert!(a.data().iter().all(|&v| (v - 0.2).abs() < 1e-7));
        let one = attention_map(&k.clone(), &random_tensor(&[1, 3], 2, Distribution::StandardNormal).unwrap()).unwrap();
        assert!(one.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn map_matches_identity_value_attention() {
        let n = 12;
        let q = random_tensor(&[n, 6], 3, Distribution::StandardNormal).unwrap();
        let k = random_tensor(&[n, 6], 4, Distribution::StandardNormal).unwrap();
        let mut eye = vec![0.0; n * n];
        (0..n).for_each(|i| eye[i * n + i] = 1.0);
        let eye = Tensor::matrix(n, n, eye).unwrap();
        let via_dense = dense_attention(&q, &k, &eye).unwrap();
        let map = attention_map(&q, &k).unwrap();
        for (a, b) in map.data().iter().zip(via_dense.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn uniform_and_band_only_lift() {
        for (n_t, n_f) in [(3, 2), (4, 4), (8, 3), (5, 1)] {
            let g = Spectrogrid::new(n_t, n_f).unwrap();
            let m = same_frequency_mass(&uniform(g.n_tokens()), &g).unwrap();
            assert!(m.per_query.iter().all(|&f| (f - 1.0 / n_f as f64).abs() < 1e-6));
            assert!((frequency_lift(&uniform(g.n_tokens()), &g).unwrap() - 1.0).abs() < 1e-6);
            let b = band_only(&g);
            assert!(same_frequency_mass(&b, &g).unwrap().per_query.iter().all(|&f| (f - 1.0).abs() < 1e-6));
            assert!((frequency_lift(&b, &g).unwrap() - n_f as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_non_stochastic() {
        let g = Spectrogrid::new(2, 2).unwrap();
        let bad = Tensor::matrix(4, 4, vec![0.5; 16]).unwrap();
        assert!(same_frequency_mass(&bad, &g).is_err());
        assert!(same_frequency_mass(&uniform(5), &g).is_err());
    }

    #[test]
    fn constant_logits_match_closed_form() {
        let g = Spectrogrid::new(16, 4).unwrap();
        for beta in [0.0, 0.5, 1.0, 3.0] {
            let a = synthesize_attention(&g, beta, LogitSource::Constant).unwrap();
            let lift = frequency_lift(&a, &g).unwrap();
            assert!((lift - closed_form_lift(&g, beta)).abs() < 1e-5, "beta {beta}");
        }
        assert!(synthesize_attention(&g, -1.0, LogitSource::Constant).is_err());
    }

    #[test]
    fn lift_grows_with_bias() {
        let g = Spectrogrid::new(8, 4).unwrap();
        let lifts: Vec<f64> = [0.0, 1.0, 2.0, 4.0]
            .iter()
            .map(|&b| frequency_lift(&synthesize_biased_attention(&g, b, 5).unwrap(), &g).unwrap())
            .collect();
        assert!(lifts.windows(2).all(|w| w[1] > w[0]), "{lifts:?}");
    }

    #[test]
    fn pgm_identity() {
        let m = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let bytes = encode_pgm(&m).unwrap();
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[255, 0, 0, 255]);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = random_tensor(&[6, 4], 3, Distribution::Uniform01).unwrap();
        export_heatmap(&m, None, &p, HeatmapFormat::Csv, HeatmapLayout::Raw).unwrap();
        let back = read_csv_matrix(&p).unwrap();
        assert!(back.bit_eq(&m));
    }

    #[test]
    fn grouped_layout_is_block_diagonal() {
        let g = Spectrogrid::new(4, 3).unwrap();
        let p = permute_map(&band_only(&g), &frequency_grouped_order(&g)).unwrap();
        let n_t = g.n_t();
        for r in 0..g.n_tokens() {
            for c in 0..g.n_tokens() {
                if p.row(r)[c] != 0.0 {
                    assert_eq!(r / n_t, c / n_t, "nonzero at ({r}, {c}) outside its band");
                }
            }
        }
    }

    #[test]
    fn bootstrap_interval_brackets_mean() {
        let g = Spectrogrid::new(8, 4).unwrap();
        let a = synthesize_biased_attention(&g, 0.0, 1).unwrap();
        let m = same_frequency_mass(&a, &g).unwrap();
        let s = lift_with_interval(&m, 4, 500, 9);
        assert!(s.ci_low <= s.lift && s.lift <= s.ci_high);
    }
}
