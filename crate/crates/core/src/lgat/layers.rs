//! Building blocks shared by the encoders, fusion block, and decoder.

use rand::Rng;

use crate::tensor::{ParamId, ParamStore, Tape, TensorError, Var};

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: store.xavier(format!("{name}.weight"), fan_in, fan_out, rng),
            bias: store.zeros(format!("{name}.bias"), 1, fan_out),
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        x.matmul(tape.param(store, self.weight))?.add_row(tape.param(store, self.bias))
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: store.ones(format!("{name}.gain"), 1, dim),
            bias: store.zeros(format!("{name}.bias"), 1, dim),
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        x.layer_norm()
            .mul_row(tape.param(store, self.gain))?
            .add_row(tape.param(store, self.bias))
    }
}

/// Scaled dot-product attention split over `heads` column groups.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub dim: usize,
    pub dropout: f64,
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, TensorError> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(TensorError::InvalidArgument(format!(
                "{name}: dimension {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            heads,
            dim,
            dropout,
            query: Linear::new(store, &format!("{name}.query"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.key"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, rng),
            out: Linear::new(store, &format!("{name}.out"), dim, dim, rng),
        })
    }

    /// Attends from each row of `queries` over the rows of `memory`.
    /// With `causal`, query `i` sees only memory rows `0..=i`.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        queries: Var<'t>,
        memory: Var<'t>,
        causal: bool,
    ) -> Result<Var<'t>, TensorError> {
        let q = self.query.forward(tape, store, queries)?;
        let k = self.key.forward(tape, store, memory)?;
        let v = self.value.forward(tape, store, memory)?;
        let head_dim = self.dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (start, end) = (h * head_dim, (h + 1) * head_dim);
            let (qh, kh, vh) = (q.slice_cols(start, end)?, k.slice_cols(start, end)?, v.slice_cols(start, end)?);
            let weights = qh
                .matmul(kh.transpose())?
                .scale(scale)
                .softmax_rows(causal)
                .dropout(self.dropout)?;
            outputs.push(weights.matmul(vh)?);
        }
        let joined = if outputs.len() == 1 { outputs[0] } else { Var::concat(&outputs, 1)? };
        self.out.forward(tape, store, joined)
    }
}

/// Position-wise `dim -> hidden -> dim` network with ReLU.
#[derive(Debug, Clone)]
pub struct FeedForward {
    inner: Linear,
    outer: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, out: usize, rng: &mut impl Rng) -> Self {
        FeedForward {
            inner: Linear::new(store, &format!("{name}.inner"), dim, hidden, rng),
            outer: Linear::new(store, &format!("{name}.outer"), hidden, out, rng),
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, x: Var<'t>) -> Result<Var<'t>, TensorError> {
        let h = self.inner.forward(tape, store, x)?.relu();
        self.outer.forward(tape, store, h)
    }
}
