use crate::attention::dense_attention;
use crate::error::Result;
use crate::grid::Spectrogrid;
use crate::mode::AttentionMode;
use crate::sparse::{litefocus_attention_grouped, litefocus_attention_reference};
use crate::tensor::Tensor;
use crate::tome::tome_attention;

/// Which implementation evaluates the focus-set modes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FocusPath {
    #[default]
    Grouped,
    Reference,
}

/// Single-head attention under `mode`.
pub fn attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    grid: &Spectrogrid,
    mode: &AttentionMode,
    path: FocusPath,
) -> Result<Tensor> {
    match (*mode, path) {
        (AttentionMode::Dense, _) => dense_attention(q, k, v),
        (AttentionMode::TokenMerge { ratio }, _) => tome_attention(q, k, v, ratio),
        (_, FocusPath::Grouped) => litefocus_attention_grouped(q, k, v, grid, mode),
        (_, FocusPath::Reference) => litefocus_attention_reference(q, k, v, grid, mode),
    }
}
