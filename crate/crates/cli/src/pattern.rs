use std::path::PathBuf;

use anyhow::{bail, ensure, Context};
use clap::{Args, ValueEnum};
use litefocus_core::pattern::{
    attention_map, closed_form_lift, export_heatmap, lift_with_interval, same_frequency_mass,
    synthesize_biased_attention, HeatmapFormat, HeatmapLayout,
};
use litefocus_core::{read_tensor, Spectrogrid};

use crate::{Outcome, Shared};

#[derive(Args)]
pub struct PatternArgs {
    /// Query tensor (LFTN, tokens x d).
    #[arg(long, requires = "k", conflicts_with = "synthetic")]
    q: Option<PathBuf>,
    /// Key tensor (LFTN, tokens x d).
    #[arg(long, requires = "q")]
    k: Option<PathBuf>,
    /// Synthesize a map with same-band logit bias `beta` instead of reading q/k.
    #[arg(long, value_name = "BETA")]
    synthetic: Option<f64>,
    /// Time steps of the grid; inferred from the token count when reading q/k,
    /// 32 for synthetic maps.
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    resamples: usize,
    /// Write the attention map; `.csv` selects CSV, anything else PGM.
    #[arg(long)]
    heatmap: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LayoutArg::Raw)]
    layout: LayoutArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LayoutArg {
    Raw,
    /// Rows and columns ordered by frequency band.
    Grouped,
}

pub fn run(shared: &Shared, args: &PatternArgs) -> anyhow::Result<Outcome> {
    let (attn, grid, source) = match (&args.q, &args.k, args.synthetic) {
        (Some(qp), Some(kp), None) => {
            let q = read_tensor(qp).with_context(|| format!("reading {}", qp.display()))?;
            let k = read_tensor(kp).with_context(|| format!("reading {}", kp.display()))?;
            let n = q.shape2()?.0;
            let nt = match args.nt {
                Some(nt) => nt,
                None => {
                    ensure!(n % shared.nf == 0, "{n} tokens do not split into {} bands", shared.nf);
                    n / shared.nf
                }
            };
            let grid = Spectrogrid::new(nt, shared.nf)?;
            ensure!(grid.n_tokens() == n, "grid {grid} has {} tokens, q has {n}", grid.n_tokens());
            (attention_map(&q, &k)?, grid, format!("{} / {}", qp.display(), kp.display()))
        }
        (None, None, Some(beta)) => {
            ensure!(beta.is_finite(), "--synthetic must be finite");
            let grid = Spectrogrid::new(args.nt.unwrap_or(32), shared.nf)?;
            let attn = synthesize_biased_attention(&grid, beta, shared.seed)?;
            (attn, grid, format!("synthetic beta={beta}"))
        }
        _ => bail!("give either --q and --k, or --synthetic"),
    };

    let mass = same_frequency_mass(&attn, &grid)?;
    let s = lift_with_interval(&mass, grid.n_f(), args.resamples, shared.seed);
    println!("source {source}");
    println!("grid {grid} ({} tokens)", grid.n_tokens());
    println!("same-frequency mass {:.6} (uniform {:.6})", mass.mean, 1.0 / grid.n_f() as f64);
    println!(
        "lift {:.6}  95% CI [{:.6}, {:.6}]  ({} resamples; 1 = no preference, {} = same band only)",
        s.lift,
        s.ci_low,
        s.ci_high,
        args.resamples,
        grid.n_f()
    );
    if let Some(beta) = args.synthetic {
        println!("constant-logit closed form at beta={beta}: {:.6}", closed_form_lift(&grid, beta));
    }

    if let Some(path) = &args.heatmap {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => HeatmapFormat::Csv,
            _ => HeatmapFormat::Pgm,
        };
        let layout = match args.layout {
            LayoutArg::Raw => HeatmapLayout::Raw,
            LayoutArg::Grouped => HeatmapLayout::FrequencyGrouped,
        };
        export_heatmap(&attn, Some(&grid), path, format, layout)
            .with_context(|| format!("writing {}", path.display()))?;
        println!("heatmap written to {}", path.display());
    }
    if let Some(out) = &shared.out {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_path(out)
            .with_context(|| format!("writing {}", out.display()))?;
        w.write_record(["n_t", "n_f", "mass", "lift", "ci_low", "ci_high", "resamples"])?;
        w.write_record([
            grid.n_t().to_string(),
            grid.n_f().to_string(),
            mass.mean.to_string(),
            s.lift.to_string(),
            s.ci_low.to_string(),
            s.ci_high.to_string(),
            args.resamples.to_string(),
        ])?;
        w.flush()?;
    }
    Ok(Outcome::Ok)
}
