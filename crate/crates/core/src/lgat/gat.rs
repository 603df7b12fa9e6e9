use rand::Rng;

use super::layers::Linear;
use crate::graph::CadGraph;
use crate::tensor::{Neighborhoods, ParamId, ParamStore, Tape, TensorError, Var};

#[derive(Debug, Clone)]
struct GatHead {
    weight: ParamId,
    attend_src: ParamId,
    attend_dst: ParamId,
}

/// Multi-head graph attention layer; heads are concatenated and passed
/// through ELU.
#[derive(Debug, Clone)]
pub struct GatLayer {
    heads: Vec<GatHead>,
    bias: ParamId,
    pub d_in: usize,
    pub head_dim: usize,
    pub negative_slope: f64,
    pub dropout: f64,
}

impl GatLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        heads: usize,
        head_dim: usize,
        negative_slope: f64,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let heads = (0..heads)
            .map(|h| GatHead {
                weight: store.xavier(format!("{name}.head{h}.weight"), d_in, head_dim, rng),
                attend_src: store.xavier(format!("{name}.head{h}.attend_src"), head_dim, 1, rng),
                attend_dst: store.xavier(format!("{name}.head{h}.attend_dst"), head_dim, 1, rng),
            })
            .collect::<Vec<_>>();
        let bias = store.zeros(format!("{name}.bias"), 1, heads.len() * head_dim);
        GatLayer { heads, bias, d_in, head_dim, negative_slope, dropout }
    }

    pub fn heads(&self) -> usize {
        self.heads.len()
    }

    pub fn d_out(&self) -> usize {
        self.heads.len() * self.head_dim
    }
}

/// Symmetric neighbor lists of `graph` (all four edge types, plus self-loops)
/// over the order of [`CadGraph::feature_rows`].
pub fn neighborhoods(graph: &CadGraph) -> Neighborhoods {
    Neighborhoods::from_lists(&graph.layout().neighbors)
}

/// One GAT layer over node features `x` `[n, d_in]`. Returns the new
/// features `[n, heads * head_dim]` and, per head, the attention
/// coefficients aligned with `hood.cols`.
pub fn gat_forward<'t>(
    layer: &GatLayer,
    tape: &'t Tape,
    store: &ParamStore,
    x: Var<'t>,
    hood: &Neighborhoods,
) -> Result<(Var<'t>, Vec<Vec<f64>>), TensorError> {
    let shape = x.shape();
    if shape.len() != 2 || shape[1] != layer.d_in || shape[0] != hood.rows() {
        return Err(TensorError::ShapeMismatch {
            op: "gat_forward",
            left: shape,
            right: vec![hood.rows(), layer.d_in],
        });
    }
    let mut outputs = Vec::with_capacity(layer.heads.len());
    let mut attention = Vec::with_capacity(layer.heads.len());
    for head in &layer.heads {
        let projected = x.matmul(tape.param(store, head.weight))?;
        let src = projected.matmul(tape.param(store, head.attend_src))?;
        let dst = projected.matmul(tape.param(store, head.attend_dst))?;
        let out = projected.graph_attention(src, dst, hood, layer.negative_slope, layer.dropout)?;
        attention.push(out.attention_coefficients().unwrap_or_default());
        outputs.push(out);
    }
    let joined = if outputs.len() == 1 { outputs[0] } else { Var::concat(&outputs, 1)? };
    Ok((joined.add_row(tape.param(store, layer.bias))?.elu(), attention))
}

/// Pooled encoding, final node features, and per-layer attention.
pub(crate) type EncoderOutput<'t> = (Var<'t>, Var<'t>, Vec<Vec<Vec<f64>>>);

/// Stacked GAT layers followed by mean pooling and a linear map to the
/// architecture dimension.
#[derive(Debug, Clone)]
pub(crate) struct GraphEncoder {
    pub layers: Vec<GatLayer>,
    pub readout: Linear,
}

impl GraphEncoder {
    pub fn new(store: &mut ParamStore, config: &super::LgatConfig, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(config.gat_layers);
        let mut d_in = config.graph_dim;
        for l in 0..config.gat_layers {
            let layer = GatLayer::new(
                store,
                &format!("gat.layer{l}"),
                d_in,
                config.gat_heads,
                config.gat_head_dim,
                config.gat_negative_slope,
                config.attention_dropout,
                rng,
            );
            d_in = layer.d_out();
            layers.push(layer);
        }
        let readout = Linear::new(store, "gat.readout", d_in, config.architecture_dim, rng);
        GraphEncoder { layers, readout }
    }

    /// Returns the pooled encoding `[1, A]`, the final node features, and the
    /// attention coefficients of every layer and head.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: Var<'t>,
        hood: &Neighborhoods,
    ) -> Result<EncoderOutput<'t>, TensorError> {
        let mut h = x;
        let mut attention = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, alpha) = gat_forward(layer, tape, store, h, hood)?;
            h = next;
            attention.push(alpha);
        }
        let pooled = self.readout.forward(tape, store, h.mean_rows())?;
        Ok((pooled, h, attention))
    }
}
