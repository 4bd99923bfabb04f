use std::path::Path;

use anyhow::{ensure, Context};
use clap::Args;
use litefocus_core::par::current_threads;
use litefocus_core::pipeline::{run_pipeline, PipelineConfig};
use litefocus_core::{AttentionMode, QUALITY_METRICS_NOTE};

use crate::{Outcome, PathArg, PlacementArg, Shared};

pub const COLUMNS: [&str; 11] = [
    "length_sec",
    "mode",
    "n_t",
    "n_f",
    "n_tokens",
    "score_evals",
    "wall_ms_median",
    "repeats",
    "speedup_vs_dense",
    "threads",
    "host",
];

#[derive(Args)]
pub struct SweepArgs {
    /// Audio lengths in seconds, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    lengths: Vec<u32>,
    /// Attention modes, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "dense,litefocus:r=0.1")]
    modes: Vec<AttentionMode>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Denoising steps per pipeline run.
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    /// Blocks that run the swept mode; the rest stay dense.
    #[arg(long, value_enum, default_value_t = PlacementArg::All)]
    placement: PlacementArg,
    #[arg(long, value_enum, default_value_t = PathArg::Grouped)]
    path: PathArg,
}

struct Row {
    length_sec: u32,
    mode: AttentionMode,
    n_t: usize,
    n_f: usize,
    n_tokens: usize,
    score_evals: u64,
    wall_ms_median: f64,
    speedup_vs_dense: Option<f64>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

pub fn host() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{}-{}-{}cpu", std::env::consts::OS, std::env::consts::ARCH, cpus)
}

pub fn run(shared: &Shared, args: &SweepArgs) -> anyhow::Result<Outcome> {
    ensure!(!args.lengths.is_empty(), "--lengths is empty");
    ensure!(!args.modes.is_empty(), "--modes is empty");
    ensure!(args.repeats > 0, "--repeats must be >= 1");
    let channels = shared.channels()?;
    let threads = current_threads();
    let host = host();
    let mut rows = Vec::new();
    for &secs in &args.lengths {
        let grid = shared.grid_for(secs)?;
        let first = rows.len();
        let cfgs = args
            .modes
            .iter()
            .map(|&mode| {
                let mut cfg = PipelineConfig::stack(
                    grid,
                    channels,
                    shared.heads,
                    args.blocks,
                    args.steps,
                    shared.seed,
                    mode,
                    args.placement.into(),
                )
                .with_context(|| format!("{mode} at {secs} s"))?;
                cfg.path = args.path.into();
                Ok((mode, cfg))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        // Modes take turns within each repeat so load drift hits all of them.
        let mut walls = vec![Vec::with_capacity(args.repeats); cfgs.len()];
        let mut score_evals = vec![0; cfgs.len()];
        for _ in 0..args.repeats {
            for (m, (mode, cfg)) in cfgs.iter().enumerate() {
                let (_, report) = run_pipeline(cfg).with_context(|| format!("{mode} at {secs} s"))?;
                walls[m].push(report.total_seconds * 1e3);
                score_evals[m] = report.score_evals();
            }
        }
        for ((&(mode, _), w), &score_evals) in cfgs.iter().zip(walls).zip(&score_evals) {
            rows.push(Row {
                length_sec: secs,
                mode,
                n_t: grid.n_t(),
                n_f: grid.n_f(),
                n_tokens: grid.n_tokens(),
                score_evals,
                wall_ms_median: median(w),
                speedup_vs_dense: None,
            });
        }
        let dense = rows[first..]
            .iter()
            .find(|r| r.mode == AttentionMode::Dense)
            .map(|r| r.wall_ms_median);
        if let Some(d) = dense {
            for r in &mut rows[first..] {
                r.speedup_vs_dense = Some(d / r.wall_ms_median);
            }
        }
    }

    let records: Vec<[String; 11]> = rows
        .iter()
        .map(|r| {
            [
                r.length_sec.to_string(),
                r.mode.to_string(),
                r.n_t.to_string(),
                r.n_f.to_string(),
                r.n_tokens.to_string(),
                r.score_evals.to_string(),
                format!("{:.3}", r.wall_ms_median),
                args.repeats.to_string(),
                r.speedup_vs_dense.map(|s| format!("{s:.3}")).unwrap_or_default(),
                threads.to_string(),
                host.clone(),
            ]
        })
        .collect();
    if let Some(out) = &shared.out {
        write_csv(out, &records).with_context(|| format!("writing {}", out.display()))?;
    }
    print_table(&records);
    println!();
    println!("note: {QUALITY_METRICS_NOTE}");
    Ok(Outcome::Ok)
}

fn write_csv(path: &Path, records: &[[String; 11]]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)?;
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn print_table(records: &[[String; 11]]) {
    let mut widths = COLUMNS.map(str::len);
    for r in records {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 1 || i == 10 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        println!("{}", padded.join("  ").trim_end());
    };
    line(COLUMNS.to_vec());
    for r in records {
        line(r.iter().map(String::as_str).collect());
    }
}
