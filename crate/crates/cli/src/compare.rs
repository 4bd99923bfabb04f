use anyhow::Context;
use clap::Args;
use litefocus_core::attention::heads_apply;
use litefocus_core::pipeline::{run_pipeline, PipelineConfig, SparsePlacement};
use litefocus_core::{
    attended_pair_count, attention_for_mode, max_relative_deviation, random_tensor, AttentionMode, Distribution,
    Spectrogrid,
};

use crate::{Outcome, PathArg, Shared};

#[derive(Args)]
pub struct CompareArgs {
    /// Baseline mode.
    #[arg(long = "mode-a", default_value = "dense")]
    mode_a: AttentionMode,
    /// Candidate mode.
    #[arg(long = "mode-b", default_value = "litefocus:r=0.1")]
    mode_b: AttentionMode,
    #[arg(long = "path-a", value_enum, default_value_t = PathArg::Grouped)]
    path_a: PathArg,
    #[arg(long = "path-b", value_enum, default_value_t = PathArg::Grouped)]
    path_b: PathArg,
    /// Audio length in seconds used to size the grid.
    #[arg(long, default_value_t = 10)]
    length: u32,
    /// Time steps; overrides the length-derived value.
    #[arg(long)]
    nt: Option<usize>,
    /// Pipeline blocks (mode applied to all of them).
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    /// Pipeline steps.
    #[arg(long, default_value_t = 2)]
    steps: usize,
    /// Largest accepted relative deviation.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

struct Side {
    mode: AttentionMode,
    path: PathArg,
}

pub fn run(shared: &Shared, args: &CompareArgs) -> anyhow::Result<Outcome> {
    let grid = match args.nt {
        Some(nt) => Spectrogrid::new(nt, shared.nf)?,
        None => shared.grid_for(args.length)?,
    };
    let channels = shared.channels()?;
    let n = grid.n_tokens();
    let a = Side { mode: args.mode_a, path: args.path_a };
    let b = Side { mode: args.mode_b, path: args.path_b };

    let input = |salt: u64| random_tensor(&[n, channels], shared.seed.wrapping_add(salt), Distribution::StandardNormal);
    let (q, k, v) = (input(1)?, input(2)?, input(3)?);
    let single = |s: &Side| {
        let mode = s.mode.with_seed(shared.seed);
        heads_apply(&q, &k, &v, shared.heads, |q, k, v| attention_for_mode(q, k, v, &grid, &mode, s.path.into()))
            .with_context(|| format!("attention under {}", s.mode))
    };
    let (ya, yb) = (single(&a)?, single(&b)?);
    let attn_dev = max_relative_deviation(&yb, &ya)?;
    let heads = shared.heads as u64;
    let count = |s: &Side| attended_pair_count(&grid, &s.mode.with_seed(shared.seed));
    let attn_ratio = (heads * count(&b)?) as f64 / (heads * count(&a)?) as f64;

    let pipeline = |s: &Side| -> anyhow::Result<_> {
        let mut cfg = PipelineConfig::stack(
            grid,
            channels,
            shared.heads,
            args.blocks,
            args.steps,
            shared.seed,
            s.mode,
            SparsePlacement::All,
        )?;
        cfg.path = s.path.into();
        run_pipeline(&cfg).with_context(|| format!("pipeline under {}", s.mode))
    };
    let ((xa, ra), (xb, rb)) = (pipeline(&a)?, pipeline(&b)?);
    let pipe_dev = max_relative_deviation(&xb, &xa)?;
    let pipe_ratio = rb.score_evals() as f64 / ra.score_evals() as f64;

    println!("grid {grid} ({n} tokens), heads {}, d_k {}", shared.heads, shared.dk);
    println!("a: {} ({:?})  b: {} ({:?})", a.mode, a.path, b.mode, b.path);
    println!("attention  deviation {attn_dev:.3e}  score ratio b/a {attn_ratio:.6}");
    println!(
        "pipeline   deviation {pipe_dev:.3e}  score ratio b/a {pipe_ratio:.6}  ({} blocks x {} steps)",
        args.blocks, args.steps
    );
    let worst = attn_dev.max(pipe_dev);
    if let Some(out) = &shared.out {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(out)
            .with_context(|| format!("writing {}", out.display()))?;
        w.write_record(["scope", "mode_a", "mode_b", "deviation", "score_ratio"])?;
        for (scope, dev, ratio) in [("attention", attn_dev, attn_ratio), ("pipeline", pipe_dev, pipe_ratio)] {
            w.write_record([scope, &a.mode.to_string(), &b.mode.to_string(), &dev.to_string(), &ratio.to_string()])?;
        }
        w.flush()?;
    }
    if worst > args.tol {
        println!("FAIL: deviation {worst:.3e} exceeds tolerance {:.3e}", args.tol);
        Ok(Outcome::ToleranceExceeded)
    } else {
        println!("ok: deviation {worst:.3e} within tolerance {:.3e}", args.tol);
        Ok(Outcome::Ok)
    }
}
