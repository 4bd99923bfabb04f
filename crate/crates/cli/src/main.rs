//! `litefocus`: benchmark and analysis front end.
//!
//! Exit codes: 0 success, 1 tolerance failure, 2 usage or input error.

mod compare;
mod pattern;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{ensure, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use litefocus_core::par::with_threads;
use litefocus_core::pipeline::SparsePlacement;
use litefocus_core::{random_tensor, write_tensor, Distribution, FocusPath, Spectrogrid};

#[derive(Parser)]
#[command(name = "litefocus", version, about = "Focus-set sparse attention benchmarks")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Shared {
    /// Seed for inputs, weights and compensation sets.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Frequency bands per grid.
    #[arg(long, global = true, default_value_t = 16)]
    pub nf: usize,
    /// Time steps per 10 s of audio.
    #[arg(long = "nt-per-10s", global = true, default_value_t = 256)]
    pub nt_per_10s: usize,
    #[arg(long, global = true, default_value_t = 1)]
    pub heads: usize,
    /// Per-head width.
    #[arg(long, global = true, default_value_t = 64)]
    pub dk: usize,
    /// Kernel worker cap (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl Shared {
    pub fn grid_for(&self, seconds: u32) -> anyhow::Result<Spectrogrid> {
        ensure!(seconds > 0, "lengths must be positive");
        Spectrogrid::for_length(seconds, self.nt_per_10s, self.nf)
            .with_context(|| format!("grid for {seconds} s"))
    }

    pub fn channels(&self) -> anyhow::Result<usize> {
        ensure!(self.heads > 0 && self.dk > 0, "--heads and --dk must be positive");
        Ok(self.heads * self.dk)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Time the toy pipeline across lengths and modes.
    Sweep(sweep::SweepArgs),
    /// Output deviation and cost ratio between two modes.
    Compare(compare::CompareArgs),
    /// Same-frequency lift of an attention map.
    Pattern(pattern::PatternArgs),
    /// Write a seeded random tensor.
    Gen(GenArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Comma-separated dimensions, e.g. `4,4`.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    /// `standard_normal` or `uniform01`.
    #[arg(long, default_value = "standard_normal")]
    dist: Distribution,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PathArg {
    Grouped,
    Reference,
}

impl From<PathArg> for FocusPath {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Grouped => FocusPath::Grouped,
            PathArg::Reference => FocusPath::Reference,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PlacementArg {
    /// Sparse mode in every block.
    All,
    /// Sparse mode only in `down-2` and `up-2`.
    SecondDownUp,
}

impl From<PlacementArg> for SparsePlacement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::All => SparsePlacement::All,
            PlacementArg::SecondDownUp => SparsePlacement::SecondDownUp,
        }
    }
}

pub enum Outcome {
    Ok,
    ToleranceExceeded,
}

fn gen(shared: &Shared, args: &GenArgs) -> anyhow::Result<Outcome> {
    let out = shared.out.as_ref().context("gen needs --out")?;
    let t = random_tensor(&args.dims, shared.seed, args.dist)?;
    write_tensor(&t, out).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {:?} ({:?}) to {}", t.dims(), args.dist, out.display());
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let shared = cli.shared;
    let result = with_threads(shared.threads, || match &cli.command {
        Command::Sweep(a) => sweep::run(&shared, a),
        Command::Compare(a) => compare::run(&shared, a),
        Command::Pattern(a) => pattern::run(&shared, a),
        Command::Gen(a) => gen(&shared, a),
    });
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ToleranceExceeded) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn shared_flags_are_global() {
        let cli = Cli::try_parse_from(["litefocus", "gen", "--dims", "2", "--seed", "9", "--out", "x"]).unwrap();
        assert_eq!(cli.shared.seed, 9);
        assert_eq!(cli.shared.nf, 16);
        assert_eq!(cli.shared.nt_per_10s, 256);
    }

    #[test]
    fn default_grid_at_80s_has_32768_tokens() {
        let cli = Cli::try_parse_from(["litefocus", "sweep", "--lengths", "80"]).unwrap();
        assert_eq!(cli.shared.grid_for(80).unwrap().n_tokens(), 32768);
    }
}
