//! Focus-set sparse attention over time x frequency token grids.
//!
//! Each query attends to the tokens of its own frequency band plus one
//! random compensation set shared by all queries. The crate provides that
//! kernel in a per-query reference form and a band-batched fast form,
//! together with a dense baseline, a token-merging baseline, attention
//! pattern statistics, and a small instrumented transformer stack for
//! timing studies.
//!
//! Kernels parallelize over query rows with rayon when the default
//! `parallel` feature is on, and run the same code sequentially otherwise.
//! Outputs are bitwise identical either way.

pub mod attention;
pub mod error;
pub mod focus;
pub mod fraction;
pub mod grid;
pub mod kernel;
pub mod mode;
pub mod par;
pub mod pattern;
pub mod pipeline;
pub mod rng;
pub mod sparse;
pub mod tensor;
pub mod tome;

pub use attention::{dense_attention, multi_head_attention, project_qkv, stable_row_softmax, ProjectionWeights};
pub use error::{Error, Result};
pub use focus::{build_focus_set, cross_frequency_sample, expected_focus_size, CompensationSet, FocusSet};
pub use fraction::Fraction;
pub use grid::Spectrogrid;
pub use kernel::{attention as attention_for_mode, FocusPath};
pub use mode::AttentionMode;
pub use sparse::{
    attended_pair_count, gather_rows, litefocus_attention_grouped, litefocus_attention_grouped_counted, litefocus_attention_reference,
};
pub use tensor::{random_tensor, read_tensor, write_tensor, Distribution, Tensor};

/// Note attached to benchmark output: perceptual quality metrics are not
/// computed here.
pub const QUALITY_METRICS_NOTE: &str = "FAD, KL and CLAP quality metrics are not reported: they require the \
full pretrained audio diffusion pipeline (checkpoint, vocoder, and evaluation set). \
Only speed and operation-count columns are measured.";

/// Largest absolute difference divided by the largest magnitude in `reference`.
pub fn max_relative_deviation(candidate: &Tensor, reference: &Tensor) -> Result<f64> {
    if candidate.dims() != reference.dims() {
        return Err(Error::Shape(format!(
            "{:?} vs {:?}",
            candidate.dims(),
            reference.dims()
        )));
    }
    let scale = reference
        .data()
        .iter()
        .fold(0.0f64, |m, &x| m.max((x as f64).abs()));
    let diff = candidate
        .data()
        .iter()
        .zip(reference.data())
        .fold(0.0f64, |m, (a, b)| m.max((*a as f64 - *b as f64).abs()));
    Ok(if scale > 0.0 { diff / scale } else { diff })
}
