use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::decoder::SummaryDecoder;
use super::fusion::FusionBlock;
use super::gat::{neighborhoods, GraphEncoder};
use super::text::{chunk_script, ChunkEncoder, ChunkPooler};
use super::{LgatConfig, LgatError, Vocab};
use crate::graph::{strip_characters, CadGraph, NodeKind};
use crate::tensor::{load_checkpoint, save_checkpoint, Neighborhoods, ParamStore, Tape, Tensor, TensorError, Var};

/// Which encoders feed the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    TextOnly,
    GraphOnly,
    FullWithoutCharacters,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::TextOnly, Variant::GraphOnly, Variant::FullWithoutCharacters, Variant::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::TextOnly => "text_only",
            Variant::GraphOnly => "graph_only",
            Variant::FullWithoutCharacters => "full_without_characters",
        }
    }

    pub fn uses_graph(self) -> bool {
        self != Variant::TextOnly
    }

    pub fn uses_text(self) -> bool {
        self != Variant::GraphOnly
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = LgatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| LgatError::Config(format!("unknown variant {s:?}")))
    }
}

/// Output of the graph encoder in evaluation mode.
#[derive(Debug, Clone)]
pub struct GraphEncoding {
    /// Pooled graph vector `[1, A]`.
    pub encoding: Tensor,
    /// Final GAT-layer features, one row per node in layout order.
    pub nodes: Tensor,
    pub kinds: Vec<(NodeKind, usize)>,
    pub neighborhoods: Neighborhoods,
    /// Attention coefficients per layer, per head, aligned with `neighborhoods.cols`.
    pub attention: Vec<Vec<Vec<f64>>>,
}

impl GraphEncoding {
    /// Final-layer features of the character nodes, keyed by character id.
    pub fn character_rows(&self) -> Vec<(usize, &[f64])> {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, (k, _))| *k == NodeKind::Character)
            .map(|(pos, &(_, id))| (id, self.nodes.row_slice(pos)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainingMeta {
    schema_version: u32,
    variant: Variant,
    step: u64,
}

const CONFIG_FILE: &str = "config.json";
const VOCAB_FILE: &str = "vocab.json";
const META_FILE: &str = "training.json";

/// Parameters and wiring of the full summarizer.
#[derive(Debug, Clone)]
pub struct LgatModel {
    pub config: LgatConfig,
    pub vocab: Vocab,
    pub variant: Variant,
    pub store: ParamStore,
    graph_encoder: GraphEncoder,
    chunk_encoder: ChunkEncoder,
    pooler: ChunkPooler,
    fusion: FusionBlock,
    decoder: SummaryDecoder,
}

impl LgatModel {
    /// Randomly initialized model; initialization depends only on `config.seed`.
    pub fn new(config: LgatConfig, vocab: Vocab, variant: Variant) -> Result<Self, LgatError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let graph_encoder = GraphEncoder::new(&mut store, &config, &mut rng);
        let chunk_encoder = ChunkEncoder::new(&mut store, &config, &mut rng)?;
        let pooler = ChunkPooler::new(&mut store, &config, &mut rng)?;
        let fusion = FusionBlock::new(&mut store, &config, &mut rng)?;
        let decoder = SummaryDecoder::new(&mut store, &config, vocab.len(), &mut rng)?;
        Ok(LgatModel { config, vocab, variant, store, graph_encoder, chunk_encoder, pooler, fusion, decoder })
    }

    pub fn decoder(&self) -> &SummaryDecoder {
        &self.decoder
    }

    /// Applies the variant's graph transformation (character stripping).
    pub fn prepare_graph(&self, graph: &CadGraph) -> CadGraph {
        match self.variant {
            Variant::FullWithoutCharacters => strip_characters(graph),
            _ => graph.clone(),
        }
    }

    fn check_graph(&self, graph: &CadGraph) -> Result<(), LgatError> {
        if graph.dim != self.config.graph_dim {
            return Err(TensorError::ShapeMismatch {
                op: "encode_graph",
                left: vec![graph.node_count(), graph.dim],
                right: vec![graph.node_count(), self.config.graph_dim],
            }
            .into());
        }
        if graph.node_count() == 0 {
            return Err(LgatError::Config("graph has no nodes".into()));
        }
        Ok(())
    }

    fn graph_input<'t>(&self, tape: &'t Tape, graph: &CadGraph) -> Result<Var<'t>, LgatError> {
        let rows = graph.feature_rows();
        Ok(tape.constant(Tensor::from_rows(&rows)?))
    }

    /// Pooled graph encoding `[1, A]` on `tape`, together with the final node
    /// features and attention coefficients.
    #[allow(clippy::type_complexity)]
    pub fn encode_graph_on<'t>(
        &self,
        tape: &'t Tape,
        graph: &CadGraph,
    ) -> Result<(Var<'t>, Var<'t>, Neighborhoods, Vec<Vec<Vec<f64>>>), LgatError> {
        self.check_graph(graph)?;
        let hood = neighborhoods(graph);
        let x = self.graph_input(tape, graph)?;
        let (pooled, nodes, attention) = self.graph_encoder.forward(tape, &self.store, x, &hood)?;
        Ok((pooled, nodes, hood, attention))
    }

    /// Evaluation-mode graph encoding. The graph is used as given; the
    /// variant's stripping is applied by [`prepare_graph`](Self::prepare_graph).
    pub fn encode_graph(&self, graph: &CadGraph) -> Result<GraphEncoding, LgatError> {
        let tape = Tape::new();
        let (pooled, nodes, neighborhoods, attention) = self.encode_graph_on(&tape, graph)?;
        Ok(GraphEncoding {
            encoding: pooled.to_tensor(),
            nodes: nodes.to_tensor(),
            kinds: graph.layout().kinds,
            neighborhoods,
            attention,
        })
    }

    pub fn chunks(&self, script: &str) -> Vec<Vec<String>> {
        chunk_script(script, self.config.max_tokens)
    }

    pub fn encode_text_on<'t>(&self, tape: &'t Tape, chunks: &[Vec<String>]) -> Result<Var<'t>, LgatError> {
        if chunks.is_empty() {
            return Err(TensorError::ShapeMismatch { op: "encode_text", left: vec![0], right: vec![1] }.into());
        }
        let encoded = chunks
            .iter()
            .map(|c| self.chunk_encoder.forward(tape, &self.store, c))
            .collect::<Result<Vec<_>, _>>()?;
        let stacked = if encoded.len() == 1 { encoded[0] } else { Var::concat(&encoded, 0)? };
        Ok(self.pooler.forward(tape, &self.store, stacked)?)
    }

    /// Evaluation-mode text encoding `[1, A]`.
    pub fn encode_text(&self, chunks: &[Vec<String>]) -> Result<Tensor, LgatError> {
        let tape = Tape::new();
        Ok(self.encode_text_on(&tape, chunks)?.to_tensor())
    }

    pub fn fuse_on<'t>(&self, tape: &'t Tape, graph: Var<'t>, text: Var<'t>) -> Result<Var<'t>, LgatError> {
        Ok(self.fusion.forward(tape, &self.store, graph, text)?)
    }

    /// Evaluation-mode fusion of two `[1, A]` encodings.
    pub fn fuse(&self, graph: &Tensor, text: &Tensor) -> Result<Tensor, LgatError> {
        let tape = Tape::new();
        Ok(self.fuse_on(&tape, tape.constant(graph.clone()), tape.constant(text.clone()))?.to_tensor())
    }

    /// Decoder memory for one input under this model's variant.
    pub fn memory_on<'t>(&self, tape: &'t Tape, graph: &CadGraph, script: &str) -> Result<Var<'t>, LgatError> {
        let graph_enc = if self.variant.uses_graph() {
            let g = self.prepare_graph(graph);
            Some(self.encode_graph_on(tape, &g)?.0)
        } else {
            None
        };
        let text_enc =
            if self.variant.uses_text() { Some(self.encode_text_on(tape, &self.chunks(script))?) } else { None };
        match (graph_enc, text_enc) {
            (Some(g), Some(t)) => self.fuse_on(tape, g, t),
            (Some(g), None) => Ok(g),
            (None, Some(t)) => Ok(t),
            (None, None) => unreachable!("every variant uses at least one encoder"),
        }
    }

    /// Strict target ids; fails on tokens outside the vocabulary.
    pub fn target_ids(&self, summary: &str) -> Result<Vec<usize>, LgatError> {
        self.vocab.encode(summary)
    }

    /// Teacher-forced loss of `target` ids given the inputs.
    pub fn loss_on<'t>(
        &self,
        tape: &'t Tape,
        graph: &CadGraph,
        script: &str,
        target: &[usize],
    ) -> Result<Var<'t>, LgatError> {
        let memory = self.memory_on(tape, graph, script)?;
        self.decoder.loss(tape, &self.store, memory, target)
    }

    /// Greedy decoding in evaluation mode; tokens joined by single spaces.
    pub fn summarize(&self, graph: &CadGraph, script: &str) -> Result<String, LgatError> {
        let tape = Tape::new();
        let memory = self.memory_on(&tape, graph, script)?.to_tensor();
        let ids = self.decoder.generate(&self.store, &memory)?;
        Ok(self.vocab.decode(&ids))
    }

    /// Writes parameters, manifest, configuration, vocabulary, and variant to `dir`.
    pub fn save(&self, dir: &Path, step: u64) -> Result<(), LgatError> {
        save_checkpoint(dir, &self.store, step, &self.config.hash())?;
        fs::write(dir.join(CONFIG_FILE), to_json(&self.config)?)?;
        fs::write(dir.join(VOCAB_FILE), to_json(&self.vocab)?)?;
        let meta = TrainingMeta { schema_version: 1, variant: self.variant, step };
        fs::write(dir.join(META_FILE), to_json(&meta)?)?;
        Ok(())
    }

    /// Rebuilds a saved model; parameter names and shapes must match the
    /// saved configuration exactly.
    pub fn load(dir: &Path) -> Result<Self, LgatError> {
        let read = |name: &str| -> Result<Vec<u8>, LgatError> { Ok(fs::read(dir.join(name))?) };
        let config: LgatConfig = serde_json::from_slice(&read(CONFIG_FILE)?)
            .map_err(|e| LgatError::Checkpoint(format!("{CONFIG_FILE}: {e}")))?;
        let vocab: Vocab = serde_json::from_slice(&read(VOCAB_FILE)?)
            .map_err(|e| LgatError::Checkpoint(format!("{VOCAB_FILE}: {e}")))?;
        let meta: TrainingMeta = serde_json::from_slice(&read(META_FILE)?)
            .map_err(|e| LgatError::Checkpoint(format!("{META_FILE}: {e}")))?;
        let (saved, manifest) = load_checkpoint(dir)?;
        if manifest.config_hash != config.hash() {
            return Err(LgatError::ConfigMismatch("checkpoint manifest does not match config.json".into()));
        }
        let mut model = LgatModel::new(config, vocab, meta.variant)?;
        if saved.len() != model.store.len() {
            return Err(LgatError::Checkpoint(format!(
                "checkpoint holds {} parameters, model expects {}",
                saved.len(),
                model.store.len()
            )));
        }
        for (id, p) in model.store.ids().zip(saved.iter()) {
            let target = model.store.get_mut(id);
            if target.name != p.name || target.value.shape() != p.value.shape() {
                return Err(LgatError::Checkpoint(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    p.name,
                    p.value.shape(),
                    target.name,
                    target.value.shape()
                )));
            }
            target.value = p.value.clone();
        }
        Ok(model)
    }

    /// Checks that a graph built with `embedder_dim` can be encoded.
    pub fn check_embedder_dim(&self, embedder_dim: usize) -> Result<(), LgatError> {
        if embedder_dim != self.config.graph_dim {
            return Err(LgatError::ConfigMismatch(format!(
                "embedder dimension {embedder_dim} differs from checkpoint graph_dim {}",
                self.config.graph_dim
            )));
        }
        Ok(())
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, LgatError> {
    serde_json::to_vec_pretty(value).map_err(|e| LgatError::Checkpoint(e.to_string()))
}
