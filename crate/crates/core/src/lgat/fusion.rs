use rand::Rng;

use super::layers::{FeedForward, LayerNorm, MultiHeadAttention};
use super::LgatConfig;
use crate::tensor::{ParamStore, Tape, TensorError, Var};

/// Joins the graph and text encodings as a two-token sequence, applies
/// self-attention, flattens to `2A`, and maps back to `A`.
#[derive(Debug, Clone)]
pub struct FusionBlock {
    dim: usize,
    attention: MultiHeadAttention,
    norm: LayerNorm,
    collapse: FeedForward,
}

impl FusionBlock {
    pub fn new(store: &mut ParamStore, config: &LgatConfig, rng: &mut impl Rng) -> Result<Self, TensorError> {
        let a = config.architecture_dim;
        Ok(FusionBlock {
            dim: a,
            attention: MultiHeadAttention::new(store, "fusion.attention", a, config.fusion_heads, config.fusion_dropout, rng)?,
            norm: LayerNorm::new(store, "fusion.norm", a),
            collapse: FeedForward::new(store, "fusion.collapse", 2 * a, a, a, rng),
        })
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        graph: Var<'t>,
        text: Var<'t>,
    ) -> Result<Var<'t>, TensorError> {
        for v in [graph, text] {
            if v.shape() != [1, self.dim] {
                return Err(TensorError::ShapeMismatch { op: "fuse", left: v.shape(), right: vec![1, self.dim] });
            }
        }
        let pair = Var::concat(&[graph, text], 0)?;
        let attended = self.attention.forward(tape, store, pair, pair, false)?;
        let h = self.norm.forward(tape, store, pair.add(attended)?)?;
        self.collapse.forward(tape, store, h.reshape(1, 2 * self.dim)?)
    }
}
