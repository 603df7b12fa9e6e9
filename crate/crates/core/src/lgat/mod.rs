//! Graph-and-text fusion summarizer: a graph attention encoder over the
//! discourse graph, a chunked text encoder with attention pooling, a fusion
//! block, and a transformer decoder.

mod config;
mod decoder;
mod fusion;
mod gat;
pub mod layers;
mod model;
mod text;
mod train;
mod vocab;

use thiserror::Error;

use crate::embed::EmbedError;
use crate::graph::GraphError;
use crate::tensor::TensorError;

pub use config::{LgatConfig, Profile};
pub use decoder::SummaryDecoder;
pub use fusion::FusionBlock;
pub use gat::{gat_forward, neighborhoods, GatLayer};
pub use model::{GraphEncoding, LgatModel, Variant};
pub use text::{chunk_script, ChunkEncoder, ChunkPooler};
pub use train::{run_ablation, train, AblationReport, Example, TrainReport};
pub use vocab::{Vocab, BOS, EOS, PAD, UNK};

#[derive(Debug, Error)]
pub enum LgatError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("token {0:?} is not in the vocabulary")]
    VocabularyMiss(String),
    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    LengthExceeded { len: usize, max: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("non-finite loss at step {step} (example {example}): {detail}")]
    NonFinite { step: usize, example: usize, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
