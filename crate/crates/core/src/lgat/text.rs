use rand::Rng;

use super::layers::{FeedForward, LayerNorm, Linear, MultiHeadAttention};
use super::LgatConfig;
use crate::embed::token_hash;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

const BUCKET_SEED: u64 = 0x6368_756e_6b73;

/// Splits `text` on whitespace and fills chunks of `max_tokens` greedily.
/// Empty text yields one empty chunk.
pub fn chunk_script(text: &str, max_tokens: usize) -> Vec<Vec<String>> {
    let max_tokens = max_tokens.max(1);
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return vec![Vec::new()];
    }
    tokens.chunks(max_tokens).map(<[String]>::to_vec).collect()
}

/// Encodes one chunk into an `[1, encoding_dim]` vector: hashed token
/// embeddings plus positions, one self-attention block, mean over tokens.
#[derive(Debug, Clone)]
pub struct ChunkEncoder {
    tokens: ParamId,
    positions: ParamId,
    buckets: usize,
    max_tokens: usize,
    dim: usize,
    attention: MultiHeadAttention,
    norm1: LayerNorm,
    ff: FeedForward,
    norm2: LayerNorm,
}

impl ChunkEncoder {
    pub fn new(store: &mut ParamStore, config: &LgatConfig, rng: &mut impl Rng) -> Result<Self, TensorError> {
        let e = config.encoding_dim;
        Ok(ChunkEncoder {
            tokens: store.xavier("text.tokens", config.text_buckets, e, rng),
            positions: store.xavier("text.positions", config.max_tokens, e, rng),
            buckets: config.text_buckets,
            max_tokens: config.max_tokens,
            dim: e,
            attention: MultiHeadAttention::new(store, "text.attention", e, config.encoder_heads, config.attention_dropout, rng)?,
            norm1: LayerNorm::new(store, "text.norm1", e),
            ff: FeedForward::new(store, "text.ff", e, 2 * e, e, rng),
            norm2: LayerNorm::new(store, "text.norm2", e),
        })
    }

    pub fn bucket(&self, token: &str) -> usize {
        (token_hash(&token.to_lowercase(), BUCKET_SEED) % self.buckets as u64) as usize
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, chunk: &[String]) -> Result<Var<'t>, TensorError> {
        if chunk.is_empty() {
            return Ok(tape.constant(Tensor::zeros(1, self.dim)));
        }
        if chunk.len() > self.max_tokens {
            return Err(TensorError::ShapeMismatch {
                op: "chunk_encoder",
                left: vec![chunk.len()],
                right: vec![self.max_tokens],
            });
        }
        let ids: Vec<usize> = chunk.iter().map(|t| self.bucket(t)).collect();
        let positions: Vec<usize> = (0..chunk.len()).collect();
        let x = tape
            .param(store, self.tokens)
            .gather(&ids)?
            .add(tape.param(store, self.positions).gather(&positions)?)?;
        let attended = self.attention.forward(tape, store, x, x, false)?;
        let h = self.norm1.forward(tape, store, x.add(attended)?)?;
        let h = self.norm2.forward(tape, store, h.add(self.ff.forward(tape, store, h)?)?)?;
        Ok(h.mean_rows())
    }
}

/// Pools per-chunk encodings `[k, encoding_dim]` into `[1, A]`:
/// projection to `A`, self-attention across chunks, then attention from a
/// learned query.
#[derive(Debug, Clone)]
pub struct ChunkPooler {
    project: Linear,
    attention: MultiHeadAttention,
    norm: LayerNorm,
    query: ParamId,
    pool: MultiHeadAttention,
}

impl ChunkPooler {
    pub fn new(store: &mut ParamStore, config: &LgatConfig, rng: &mut impl Rng) -> Result<Self, TensorError> {
        let a = config.architecture_dim;
        Ok(ChunkPooler {
            project: Linear::new(store, "pooler.project", config.encoding_dim, a, rng),
            attention: MultiHeadAttention::new(store, "pooler.attention", a, config.pooler_heads, config.attention_dropout, rng)?,
            norm: LayerNorm::new(store, "pooler.norm", a),
            query: store.xavier("pooler.query", 1, a, rng),
            pool: MultiHeadAttention::new(store, "pooler.pool", a, config.pooler_heads, config.attention_dropout, rng)?,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, chunks: Var<'t>) -> Result<Var<'t>, TensorError> {
        let x = self.project.forward(tape, store, chunks)?;
        let attended = self.attention.forward(tape, store, x, x, false)?;
        let h = self.norm.forward(tape, store, x.add(attended)?)?;
        self.pool.forward(tape, store, tape.param(store, self.query), h, false)
    }
}
