use rand::Rng;

use super::layers::{FeedForward, LayerNorm, Linear, MultiHeadAttention};
use super::vocab::{BOS, EOS};
use super::{LgatConfig, LgatError};
use crate::tensor::{ParamId, ParamStore, Tape, Var};

#[derive(Debug, Clone)]
struct DecoderLayer {
    self_attention: MultiHeadAttention,
    norm1: LayerNorm,
    cross_attention: MultiHeadAttention,
    norm2: LayerNorm,
    ff: FeedForward,
    norm3: LayerNorm,
}

/// Post-norm transformer decoder conditioned on a one-row memory.
#[derive(Debug, Clone)]
pub struct SummaryDecoder {
    tokens: ParamId,
    positions: ParamId,
    layers: Vec<DecoderLayer>,
    output: Linear,
    dropout: f64,
    pub vocab_size: usize,
    pub max_len: usize,
}

impl SummaryDecoder {
    pub fn new(
        store: &mut ParamStore,
        config: &LgatConfig,
        vocab_size: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, LgatError> {
        let a = config.architecture_dim;
        let p = config.decoder_dropout;
        let mut layers = Vec::with_capacity(config.decoder_layers);
        for l in 0..config.decoder_layers {
            let name = format!("decoder.layer{l}");
            layers.push(DecoderLayer {
                self_attention: MultiHeadAttention::new(store, &format!("{name}.self"), a, config.decoder_heads, p, rng)?,
                norm1: LayerNorm::new(store, &format!("{name}.norm1"), a),
                cross_attention: MultiHeadAttention::new(store, &format!("{name}.cross"), a, config.decoder_heads, p, rng)?,
                norm2: LayerNorm::new(store, &format!("{name}.norm2"), a),
                ff: FeedForward::new(store, &format!("{name}.ff"), a, config.decoder_ff_dim, a, rng),
                norm3: LayerNorm::new(store, &format!("{name}.norm3"), a),
            });
        }
        Ok(SummaryDecoder {
            tokens: store.xavier("decoder.tokens", vocab_size, a, rng),
            positions: store.xavier("decoder.positions", config.max_target_len, a, rng),
            layers,
            output: Linear::new(store, "decoder.output", a, vocab_size, rng),
            dropout: p,
            vocab_size,
            max_len: config.max_target_len,
        })
    }

    /// Next-token logits `[len(inputs), vocab]` for every prefix of `inputs`.
    pub fn logits<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        memory: Var<'t>,
        inputs: &[usize],
    ) -> Result<Var<'t>, LgatError> {
        if inputs.len() > self.max_len {
            return Err(LgatError::LengthExceeded { len: inputs.len(), max: self.max_len });
        }
        let positions: Vec<usize> = (0..inputs.len()).collect();
        let mut h = tape
            .param(store, self.tokens)
            .gather(inputs)?
            .add(tape.param(store, self.positions).gather(&positions)?)?
            .dropout(self.dropout)?;
        for layer in &self.layers {
            let s = layer.self_attention.forward(tape, store, h, h, true)?.dropout(self.dropout)?;
            h = layer.norm1.forward(tape, store, h.add(s)?)?;
            let c = layer.cross_attention.forward(tape, store, h, memory, false)?.dropout(self.dropout)?;
            h = layer.norm2.forward(tape, store, h.add(c)?)?;
            let f = layer.ff.forward(tape, store, h)?.dropout(self.dropout)?;
            h = layer.norm3.forward(tape, store, h.add(f)?)?;
        }
        Ok(self.output.forward(tape, store, h)?)
    }

    /// Teacher-forced cross-entropy of `target` (without specials); the
    /// decoder reads `BOS target` and predicts `target EOS`.
    pub fn loss<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        memory: Var<'t>,
        target: &[usize],
    ) -> Result<Var<'t>, LgatError> {
        if target.len() + 1 > self.max_len {
            return Err(LgatError::LengthExceeded { len: target.len() + 1, max: self.max_len });
        }
        let mut inputs = Vec::with_capacity(target.len() + 1);
        inputs.push(BOS);
        inputs.extend_from_slice(target);
        let mut expected = target.to_vec();
        expected.push(EOS);
        Ok(self.logits(tape, store, memory, &inputs)?.cross_entropy(&expected)?)
    }

    /// Greedy decoding; stops at `EOS` or after `max_len` tokens. The
    /// returned ids exclude `BOS` and `EOS`.
    pub fn generate(&self, store: &ParamStore, memory: &crate::tensor::Tensor) -> Result<Vec<usize>, LgatError> {
        let mut inputs = vec![BOS];
        let mut out = Vec::new();
        while out.len() < self.max_len {
            let tape = Tape::new();
            let logits = self.logits(&tape, store, tape.constant(memory.clone()), &inputs)?;
            let value = logits.value();
            let last = value.row_slice(value.rows() - 1);
            let next = argmax(last);
            if next == EOS {
                break;
            }
            out.push(next);
            if inputs.len() == self.max_len {
                break;
            }
            inputs.push(next);
        }
        Ok(out)
    }
}

/// Index of the largest entry; the lowest index wins ties.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}
