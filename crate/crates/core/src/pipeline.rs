//! A toy stand-in for the attention-bearing blocks of a denoising U-Net.
//!
//! Each block is pre-norm residual: `x += attn(norm(x))`, then
//! `x += W2 gelu(W1 norm(x))`. The stack is applied `steps` times. Stage
//! wall times use a monotone clock; operation counts are exact.

use std::time::Instant;

use crate::attention::{heads_apply, matmul, project_qkv, ProjectionWeights};
use crate::error::{shape, validation, Result};
use crate::grid::Spectrogrid;
use crate::kernel::{attention, FocusPath};
use crate::mode::AttentionMode;
use crate::rng::mix_seed;
use crate::sparse::attended_pair_count;
use crate::tensor::{random_tensor, Distribution, Tensor};

const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct BlockParams {
    pub label: String,
    pub projections: ProjectionWeights,
    /// `d_model x 4 d_model`
    pub mlp_w1: Tensor,
    /// `4 d_model x d_model`
    pub mlp_w2: Tensor,
    pub mode: AttentionMode,
}

impl BlockParams {
    pub fn new(
        label: impl Into<String>,
        projections: ProjectionWeights,
        mlp_w1: Tensor,
        mlp_w2: Tensor,
        mode: AttentionMode,
    ) -> Result<Self> {
        let c = projections.channels();
        let d = projections.d_model();
        if c != d {
            return Err(shape(format!(
                "residual blocks need d_model == channels, got {d} vs {c}"
            )));
        }
        if mlp_w1.shape2()? != (d, 4 * d) || mlp_w2.shape2()? != (4 * d, d) {
            return Err(shape(format!(
                "mlp weights must be {d}x{} and {}x{d}, got {:?} and {:?}",
                4 * d,
                4 * d,
                mlp_w1.dims(),
                mlp_w2.dims()
            )));
        }
        Ok(Self {
            label: label.into(),
            projections,
            mlp_w1,
            mlp_w2,
            mode,
        })
    }

    pub fn channels(&self) -> usize {
        self.projections.channels()
    }

    pub fn with_mode(mut self, mode: AttentionMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Normal weights scaled by `1 / sqrt(fan_in)`, dense mode.
pub fn init_block_params(channels: usize, heads: usize, seed: u64) -> Result<BlockParams> {
    if channels == 0 || heads == 0 || !channels.is_multiple_of(heads) {
        return Err(validation(format!(
            "heads ({heads}) must divide channels ({channels})"
        )));
    }
    let scaled = |dims: [usize; 2], salt: u64| -> Result<Tensor> {
        let t = random_tensor(&dims, mix_seed(seed, salt), Distribution::StandardNormal)?;
        let s = 1.0 / (dims[0] as f32).sqrt();
        Tensor::new(dims.to_vec(), t.into_data().into_iter().map(|v| v * s).collect())
    };
    let c = channels;
    let proj = ProjectionWeights::new(scaled([c, c], 1)?, scaled([c, c], 2)?, scaled([c, c], 3)?, heads)?;
    BlockParams::new("block", proj, scaled([c, 4 * c], 4)?, scaled([4 * c, c], 5)?, AttentionMode::Dense)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Attention,
    Projections,
    Mlp,
    Other,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Attention, Stage::Projections, Stage::Mlp, Stage::Other];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Attention => "attention",
            Stage::Projections => "projections",
            Stage::Mlp => "mlp",
            Stage::Other => "other",
        }
    }

    fn idx(self) -> usize {
        self as usize
    }
}

/// Per-stage wall time and operation counts.
///
/// Counts: attention in query-key score evaluations; projections and mlp in
/// multiply-accumulates; other in elementwise operations (norms, residuals,
/// activations).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimingReport {
    pub seconds: [f64; 4],
    pub counts: [u64; 4],
    pub total_seconds: f64,
}

impl TimingReport {
    pub fn stage_seconds(&self, s: Stage) -> f64 {
        self.seconds[s.idx()]
    }

    pub fn stage_count(&self, s: Stage) -> u64 {
        self.counts[s.idx()]
    }

    pub fn score_evals(&self) -> u64 {
        self.stage_count(Stage::Attention)
    }

    pub fn stage_sum(&self) -> f64 {
        self.seconds.iter().sum()
    }

    /// Attention time over the sum of stage times.
    pub fn attention_share(&self) -> f64 {
        let sum = self.stage_sum();
        if sum > 0.0 {
            self.stage_seconds(Stage::Attention) / sum
        } else {
            0.0
        }
    }

    fn add(&mut self, s: Stage, started: Instant, count: u64) {
        self.seconds[s.idx()] += started.elapsed().as_secs_f64();
        self.counts[s.idx()] += count;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BreakdownRow {
    pub stage: Stage,
    pub seconds: f64,
    pub share: f64,
}

/// One row per stage in [`Stage::ALL`] order; shares are normalized by the
/// stage-time sum.
pub fn timing_breakdown(report: &TimingReport) -> Vec<BreakdownRow> {
    let sum = report.stage_sum();
    Stage::ALL
        .iter()
        .map(|&stage| {
            let seconds = report.stage_seconds(stage);
            BreakdownRow {
                stage,
                seconds,
                share: if sum > 0.0 { seconds / sum } else { 0.0 },
            }
        })
        .collect()
}

fn layer_norm(x: &Tensor) -> Tensor {
    let c = x.cols();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        out.extend(row.iter().map(|&v| ((v as f64 - mean) * inv) as f32));
    }
    Tensor::from_parts(x.dims().to_vec(), out)
}

fn gelu(x: f32) -> f32 {
    let x = x as f64;
    let c = (2.0 / std::f64::consts::PI).sqrt();
    (0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())) as f32
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::from_parts(a.dims().to_vec(), data)
}

/// One block with the grouped focus path.
pub fn run_block(x: &Tensor, p: &BlockParams, grid: &Spectrogrid) -> Result<Tensor> {
    run_block_timed(x, p, grid, FocusPath::Grouped, &mut TimingReport::default())
}

pub fn run_block_timed(
    x: &Tensor,
    p: &BlockParams,
    grid: &Spectrogrid,
    path: FocusPath,
    report: &mut TimingReport,
) -> Result<Tensor> {
    let (n, c) = x.shape2()?;
    if c != p.channels() {
        return Err(shape(format!("state has {c} channels, block expects {}", p.channels())));
    }
    if n != grid.n_tokens() {
        return Err(shape(format!("state has {n} tokens, grid {grid} has {}", grid.n_tokens())));
    }
    let heads = p.projections.heads();
    let hidden = p.mlp_w1.dims()[1];
    let elementwise = (n * c) as u64;

    let t = Instant::now();
    let h = layer_norm(x);
    report.add(Stage::Other, t, elementwise);

    let t = Instant::now();
    let (q, k, v) = project_qkv(&h, &p.projections)?;
    report.add(Stage::Projections, t, 3 * (n * c * p.projections.d_model()) as u64);

    let t = Instant::now();
    let attn = heads_apply(&q, &k, &v, heads, |q, k, v| attention(q, k, v, grid, &p.mode, path))?;
    report.add(Stage::Attention, t, heads as u64 * attended_pair_count(grid, &p.mode)?);

    let t = Instant::now();
    let x1 = add(x, &attn);
    let h2 = layer_norm(&x1);
    report.add(Stage::Other, t, 2 * elementwise);

    let t = Instant::now();
    let up = matmul(&h2, &p.mlp_w1)?;
    let up = Tensor::from_parts(up.dims().to_vec(), up.into_data().into_iter().map(gelu).collect());
    let down = matmul(&up, &p.mlp_w2)?;
    report.add(Stage::Mlp, t, 2 * (n * c * hidden) as u64);

    let t = Instant::now();
    let out = add(&x1, &down);
    report.add(Stage::Other, t, elementwise + (n * hidden) as u64);
    Ok(out)
}

/// Where a sparse mode is installed in a stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SparsePlacement {
    /// Every block.
    All,
    /// Only the second down block and the second up block; others dense.
    SecondDownUp,
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub grid: Spectrogrid,
    pub channels: usize,
    pub blocks: Vec<BlockParams>,
    pub steps: usize,
    pub seed: u64,
    /// Starting state; drawn from `seed` when absent.
    pub initial: Option<Tensor>,
    pub path: FocusPath,
}

/// `down-1 .. down-k, up-1 .. up-m` for a stack of `n` blocks.
pub fn block_labels(n: usize) -> Vec<String> {
    let down = n.div_ceil(2);
    (0..n)
        .map(|i| {
            if i < down {
                format!("down-{}", i + 1)
            } else {
                format!("up-{}", i - down + 1)
            }
        })
        .collect()
}

impl PipelineConfig {
    /// A stack of `n_blocks` freshly initialized blocks running `mode`
    /// where `placement` says, dense elsewhere.
    #[allow(clippy::too_many_arguments)]
    pub fn stack(
        grid: Spectrogrid,
        channels: usize,
        heads: usize,
        n_blocks: usize,
        steps: usize,
        seed: u64,
        mode: AttentionMode,
        placement: SparsePlacement,
    ) -> Result<Self> {
        let blocks = block_labels(n_blocks)
            .into_iter()
            .enumerate()
            .map(|(i, label)| {
                let sparse = match placement {
                    SparsePlacement::All => true,
                    SparsePlacement::SecondDownUp => label == "down-2" || label == "up-2",
                };
                let mut b = init_block_params(channels, heads, mix_seed(seed, 1000 + i as u64))?
                    .with_mode(if sparse { mode } else { AttentionMode::Dense });
                b.label = label;
                Ok(b)
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = Self {
            grid,
            channels,
            blocks,
            steps,
            seed,
            initial: None,
            path: FocusPath::Grouped,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mode(mut self, mode: AttentionMode) -> Self {
        self.blocks.iter_mut().for_each(|b| b.mode = mode);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(validation("steps must be >= 1"));
        }
        if self.blocks.is_empty() {
            return Err(validation("pipeline needs at least one block"));
        }
        if let Some(b) = self.blocks.iter().find(|b| b.channels() != self.channels) {
            return Err(shape(format!(
                "block `{}` has {} channels, pipeline has {}",
                b.label,
                b.channels(),
                self.channels
            )));
        }
        if let Some(x) = &self.initial {
            if x.shape2()? != (self.grid.n_tokens(), self.channels) {
                return Err(shape(format!(
                    "initial state is {:?}, expected [{}, {}]",
                    x.dims(),
                    self.grid.n_tokens(),
                    self.channels
                )));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<Tensor> {
        match &self.initial {
            Some(x) => Ok(x.clone()),
            None => random_tensor(
                &[self.grid.n_tokens(), self.channels],
                mix_seed(self.seed, 7),
                Distribution::StandardNormal,
            ),
        }
    }
}

/// Compensation seed for block `block` at step `step`.
pub fn step_seed(base: u64, block: usize, step: usize) -> u64 {
    mix_seed(base, ((step as u64) << 32) | block as u64)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<(Tensor, TimingReport)> {
    cfg.validate()?;
    let mut x = cfg.initial_state()?;
    let mut report = TimingReport::default();
    let started = Instant::now();
    for step in 0..cfg.steps {
        for (bi, block) in cfg.blocks.iter().enumerate() {
            let mode = match block.mode.seed() {
                Some(base) => block.mode.with_seed(step_seed(mix_seed(cfg.seed, base), bi, step)),
                None => block.mode,
            };
            let p = BlockParams { mode, ..block.clone() };
            x = run_block_timed(&x, &p, &cfg.grid, cfg.path, &mut report)?;
        }
    }
    report.total_seconds = started.elapsed().as_secs_f64();
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_block(c: usize) -> BlockParams {
        let z = |r, k| Tensor::zeros(&[r, k]).unwrap();
        let proj = ProjectionWeights::new(z(c, c), z(c, c), z(c, c), 1).unwrap();
        BlockParams::new("zero", proj, z(c, 4 * c), z(4 * c, c), AttentionMode::Dense).unwrap()
    }

    #[test]
    fn zero_block_is_identity() {
        let grid = Spectrogrid::new(4, 2).unwrap();
        let x = random_tensor(&[8, 6], 3, Distribution::StandardNormal).unwrap();
        assert!(run_block(&x, &zero_block(6), &grid).unwrap().bit_eq(&x));

        let cfg = PipelineConfig {
            grid,
            channels: 6,
            blocks: vec![zero_block(6)],
            steps: 1,
            seed: 0,
            initial: Some(x.clone()),
            path: FocusPath::Grouped,
        };
        assert!(run_pipeline(&cfg).unwrap().0.bit_eq(&x));
    }

    #[test]
    fn init_is_deterministic_and_validated() {
        let a = init_block_params(8, 2, 5).unwrap();
        let b = init_block_params(8, 2, 5).unwrap();
        assert_eq!(a.projections, b.projections);
        assert_eq!(a.mlp_w1, b.mlp_w1);
        assert!(init_block_params(8, 3, 5).is_err());
    }

    #[test]
    fn labels_and_placement() {
        assert_eq!(block_labels(4), vec!["down-1", "down-2", "up-1", "up-2"]);
        let grid = Spectrogrid::new(4, 2).unwrap();
        let lf = AttentionMode::litefocus(0.1, 1).unwrap();
        let cfg = PipelineConfig::stack(grid, 8, 1, 4, 1, 0, lf, SparsePlacement::SecondDownUp).unwrap();
        let modes: Vec<_> = cfg.blocks.iter().map(|b| b.mode).collect();
        assert_eq!(modes, vec![AttentionMode::Dense, lf, AttentionMode::Dense, lf]);
    }

    #[test]
    fn config_validation() {
        let grid = Spectrogrid::new(4, 2).unwrap();
        assert!(PipelineConfig::stack(grid, 8, 1, 4, 0, 0, AttentionMode::Dense, SparsePlacement::All).is_err());
        assert!(PipelineConfig::stack(grid, 8, 1, 0, 1, 0, AttentionMode::Dense, SparsePlacement::All).is_err());
        let mut cfg = PipelineConfig::stack(grid, 8, 1, 1, 1, 0, AttentionMode::Dense, SparsePlacement::All).unwrap();
        cfg.initial = Some(Tensor::zeros(&[7, 8]).unwrap());
        assert!(run_pipeline(&cfg).is_err());
    }

    #[test]
    fn breakdown_shares() {
        let r = TimingReport {
            seconds: [0.0, 0.0, 2.0, 0.0],
            ..Default::default()
        };
        let rows = timing_breakdown(&r);
        assert_eq!(rows[2].share, 1.0);
        let r = TimingReport {
            seconds: [0.5; 4],
            ..Default::default()
        };
        assert!(timing_breakdown(&r).iter().all(|row| row.share == 0.25));
        let names: Vec<_> = timing_breakdown(&r).iter().map(|r| r.stage.name()).collect();
        assert_eq!(names, vec!["attention", "projections", "mlp", "other"]);
    }

    #[test]
    fn step_seeds_differ() {
        assert_ne!(step_seed(1, 0, 0), step_seed(1, 0, 1));
        assert_ne!(step_seed(1, 0, 0), step_seed(1, 1, 0));
    }
}
