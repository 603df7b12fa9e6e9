//! Character-aware discourse graph over scenes, dialogues, and characters.
//!
//! Nodes are kept in three typed tables; edges in four typed lists that
//! reference node ids (not storage positions), so reordering a table leaves
//! the graph unchanged. Edges are undirected: message passing visits both
//! endpoints symmetrically.

mod export;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbedError, Embedder};
use crate::screenplay::Screenplay;

pub use export::{export_graph, import_graph, ExportFormat};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("embedder returned a vector of dimension {found}, expected {expected}")]
    EmbeddingDimMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("graph schema violation: {0}")]
    SchemaViolation(String),
    #[error("graph invariant violated: {0}")]
    InvariantViolation(String),
    #[error("unsupported graph format {0:?}")]
    UnsupportedFormat(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneNode {
    pub id: usize,
    pub emb: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueNode {
    pub id: usize,
    pub emb: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterNode {
    pub id: usize,
    pub name: String,
    pub emb: Vec<f64>,
}

/// Typed edge lists, each pair written `(first kind, second kind)` as the
/// field name says: `sd` is `(scene, dialogue)`, `cd` is `(character, dialogue)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edges {
    pub ss: Vec<(usize, usize)>,
    pub sd: Vec<(usize, usize)>,
    pub sc: Vec<(usize, usize)>,
    pub cd: Vec<(usize, usize)>,
}

impl Edges {
    pub fn len(&self) -> usize {
        self.ss.len() + self.sd.len() + self.sc.len() + self.cd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadGraph {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub dim: usize,
    /// Set once character vectors come from a trained encoder; relaxes the
    /// all-zero check on import.
    #[serde(default)]
    pub post_training: bool,
    pub scenes: Vec<SceneNode>,
    pub dialogues: Vec<DialogueNode>,
    pub characters: Vec<CharacterNode>,
    pub edges: Edges,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphOptions {
    /// Count a character as present in a scene when its name occurs in the
    /// scene's action text, even without dialogue.
    #[serde(default)]
    pub include_mentions: bool,
    /// Prefix the scene heading to the embedded scene description.
    #[serde(default)]
    pub include_heading: bool,
}

/// Node kinds in the global ordering used for message passing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Scene,
    Dialogue,
    Character,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Scene => "scene",
            NodeKind::Dialogue => "dialogue",
            NodeKind::Character => "character",
        }
    }

    pub(crate) fn prefix(self) -> char {
        match self {
            NodeKind::Scene => 's',
            NodeKind::Dialogue => 'd',
            NodeKind::Character => 'c',
        }
    }
}

fn embed_checked(embedder: &dyn Embedder, text: &str) -> Result<Vec<f64>, GraphError> {
    let v = embedder.embed(text)?;
    if v.len() != embedder.dim() {
        return Err(GraphError::EmbeddingDimMismatch {
            expected: embedder.dim(),
            found: v.len(),
        });
    }
    Ok(v)
}

fn mentions(action_text: &str, name: &str) -> bool {
    let words: Vec<&str> = name.split(' ').collect();
    let upper = action_text.to_uppercase();
    let tokens: Vec<&str> = upper
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .collect();
    tokens.windows(words.len()).any(|w| w == words.as_slice())
}

pub fn build_graph(screenplay: &Screenplay, embedder: &dyn Embedder) -> Result<CadGraph, GraphError> {
    build_graph_with(screenplay, embedder, GraphOptions::default())
}

pub fn build_graph_with(
    screenplay: &Screenplay,
    embedder: &dyn Embedder,
    options: GraphOptions,
) -> Result<CadGraph, GraphError> {
    let dim = embedder.dim();
    if dim == 0 {
        return Err(EmbedError::ZeroDim.into());
    }
    let registry = screenplay.registry();
    let mut graph = CadGraph {
        schema_version: SCHEMA_VERSION,
        dim,
        post_training: false,
        scenes: Vec::with_capacity(screenplay.scenes.len()),
        dialogues: Vec::new(),
        characters: registry
            .names()
            .iter()
            .enumerate()
            .map(|(id, name)| CharacterNode { id, name: name.clone(), emb: vec![0.0; dim] })
            .collect(),
        edges: Edges::default(),
    };

    for scene in &screenplay.scenes {
        let text = if options.include_heading && !scene.heading.is_empty() {
            format!("{} {}", scene.heading, scene.description)
        } else {
            scene.description.clone()
        };
        graph.scenes.push(SceneNode { id: scene.index, emb: embed_checked(embedder, &text)? });
        if scene.index > 0 {
            graph.edges.ss.push((scene.index - 1, scene.index));
        }

        let mut present: BTreeSet<usize> = scene.cast.iter().filter_map(|n| registry.id(n)).collect();
        for (speaker, text) in scene.dialogues() {
            let id = graph.dialogues.len();
            let character = registry
                .id(speaker)
                .ok_or_else(|| GraphError::InvariantViolation(format!("unregistered speaker {speaker:?}")))?;
            graph.dialogues.push(DialogueNode { id, emb: embed_checked(embedder, text)? });
            graph.edges.sd.push((scene.index, id));
            graph.edges.cd.push((character, id));
            present.insert(character);
        }
        if options.include_mentions {
            for (id, name) in registry.names().iter().enumerate() {
                if mentions(&scene.description, name) {
                    present.insert(id);
                }
            }
        }
        graph.edges.sc.extend(present.into_iter().map(|c| (scene.index, c)));
    }
    Ok(graph)
}

/// Removes character nodes together with their scene and dialogue edges.
pub fn strip_characters(graph: &CadGraph) -> CadGraph {
    CadGraph {
        characters: Vec::new(),
        edges: Edges {
            ss: graph.edges.ss.clone(),
            sd: graph.edges.sd.clone(),
            sc: Vec::new(),
            cd: Vec::new(),
        },
        ..graph.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterDegree {
    pub id: usize,
    pub name: String,
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub schema_version: u32,
    #[serde(rename = "V_s")]
    pub scenes: usize,
    #[serde(rename = "V_d")]
    pub dialogues: usize,
    #[serde(rename = "V_c")]
    pub characters: usize,
    #[serde(rename = "E_ss")]
    pub ss: usize,
    #[serde(rename = "E_sd")]
    pub sd: usize,
    #[serde(rename = "E_sc")]
    pub sc: usize,
    #[serde(rename = "E_cd")]
    pub cd: usize,
    pub character_degree: Vec<CharacterDegree>,
}

impl GraphStats {
    pub fn degree_of(&self, character: usize) -> Option<usize> {
        self.character_degree.iter().find(|c| c.id == character).map(|c| c.degree)
    }
}

pub fn graph_stats(graph: &CadGraph) -> GraphStats {
    let mut degree: BTreeMap<usize, usize> = graph.characters.iter().map(|c| (c.id, 0)).collect();
    for &(_, c) in &graph.edges.sc {
        *degree.entry(c).or_default() += 1;
    }
    for &(c, _) in &graph.edges.cd {
        *degree.entry(c).or_default() += 1;
    }
    GraphStats {
        schema_version: SCHEMA_VERSION,
        scenes: graph.scenes.len(),
        dialogues: graph.dialogues.len(),
        characters: graph.characters.len(),
        ss: graph.edges.ss.len(),
        sd: graph.edges.sd.len(),
        sc: graph.edges.sc.len(),
        cd: graph.edges.cd.len(),
        character_degree: graph
            .characters
            .iter()
            .map(|c| CharacterDegree { id: c.id, name: c.name.clone(), degree: degree[&c.id] })
            .collect(),
    }
}

/// Positions of every node in the global order scenes, dialogues, characters
/// (each in storage order), and the symmetric neighbor lists over that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLayout {
    pub kinds: Vec<(NodeKind, usize)>,
    /// Sorted neighbor positions of each node, including the node itself.
    pub neighbors: Vec<Vec<usize>>,
}

impl NodeLayout {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn positions_of(&self, kind: NodeKind) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .filter(move |(_, (k, _))| *k == kind)
            .map(|(pos, &(_, id))| (pos, id))
    }
}

impl CadGraph {
    pub fn node_count(&self) -> usize {
        self.scenes.len() + self.dialogues.len() + self.characters.len()
    }

    pub fn character_name(&self, id: usize) -> Option<&str> {
        self.characters.iter().find(|c| c.id == id).map(|c| c.name.as_str())
    }

    pub fn layout(&self) -> NodeLayout {
        let mut kinds = Vec::with_capacity(self.node_count());
        kinds.extend(self.scenes.iter().map(|n| (NodeKind::Scene, n.id)));
        kinds.extend(self.dialogues.iter().map(|n| (NodeKind::Dialogue, n.id)));
        kinds.extend(self.characters.iter().map(|n| (NodeKind::Character, n.id)));
        let position: HashMap<(NodeKind, usize), usize> =
            kinds.iter().enumerate().map(|(pos, &key)| (key, pos)).collect();

        let mut neighbors: Vec<BTreeSet<usize>> = (0..kinds.len()).map(|i| BTreeSet::from([i])).collect();
        let typed = [
            (NodeKind::Scene, NodeKind::Scene, &self.edges.ss),
            (NodeKind::Scene, NodeKind::Dialogue, &self.edges.sd),
            (NodeKind::Scene, NodeKind::Character, &self.edges.sc),
            (NodeKind::Character, NodeKind::Dialogue, &self.edges.cd),
        ];
        for (ka, kb, list) in typed {
            for &(a, b) in list {
                if let (Some(&pa), Some(&pb)) = (position.get(&(ka, a)), position.get(&(kb, b))) {
                    neighbors[pa].insert(pb);
                    neighbors[pb].insert(pa);
                }
            }
        }
        NodeLayout {
            kinds,
            neighbors: neighbors.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    /// Input feature rows in [`layout`](Self::layout) order.
    pub fn feature_rows(&self) -> Vec<&[f64]> {
        self.scenes
            .iter()
            .map(|n| n.emb.as_slice())
            .chain(self.dialogues.iter().map(|n| n.emb.as_slice()))
            .chain(self.characters.iter().map(|n| n.emb.as_slice()))
            .collect()
    }

    /// Checks every structural invariant; used after import.
    pub fn validate(&self) -> Result<(), GraphError> {
        let schema = |m: String| Err(GraphError::SchemaViolation(m));
        let invariant = |m: String| Err(GraphError::InvariantViolation(m));
        if self.dim == 0 {
            return schema("dim must be positive".into());
        }
        let tables: [(&str, Vec<(usize, usize)>); 3] = [
            ("scene", self.scenes.iter().map(|n| (n.id, n.emb.len())).collect()),
            ("dialogue", self.dialogues.iter().map(|n| (n.id, n.emb.len())).collect()),
            ("character", self.characters.iter().map(|n| (n.id, n.emb.len())).collect()),
        ];
        let mut ids: [HashSet<usize>; 3] = Default::default();
        for (slot, (kind, rows)) in tables.iter().enumerate() {
            for &(id, len) in rows {
                if len != self.dim {
                    return schema(format!("{kind} {id} has embedding dim {len}, expected {}", self.dim));
                }
                if !ids[slot].insert(id) {
                    return schema(format!("duplicate {kind} id {id}"));
                }
            }
        }
        let [scene_ids, dialogue_ids, character_ids] = &ids;
        for node in self.scenes.iter().map(|n| &n.emb).chain(self.dialogues.iter().map(|n| &n.emb)) {
            if node.iter().any(|x| !x.is_finite()) {
                return schema("non-finite embedding value".into());
            }
        }
        if !self.post_training && self.characters.iter().any(|c| c.emb.iter().any(|&x| x != 0.0)) {
            return invariant("character embeddings must be zero before training".into());
        }
        let check_refs = |name: &str, list: &[(usize, usize)], a: &HashSet<usize>, b: &HashSet<usize>| {
            for &(x, y) in list {
                if !a.contains(&x) || !b.contains(&y) {
                    return Err(GraphError::SchemaViolation(format!("{name} edge ({x}, {y}) references a missing node")));
                }
            }
            Ok(())
        };
        check_refs("ss", &self.edges.ss, scene_ids, scene_ids)?;
        check_refs("sd", &self.edges.sd, scene_ids, dialogue_ids)?;
        check_refs("sc", &self.edges.sc, scene_ids, character_ids)?;
        check_refs("cd", &self.edges.cd, character_ids, dialogue_ids)?;

        let mut order: Vec<usize> = scene_ids.iter().copied().collect();
        order.sort_unstable();
        if order.iter().enumerate().any(|(i, &id)| i != id) {
            return invariant("scene ids must be 0..n-1".into());
        }
        let mut path = self.edges.ss.clone();
        path.sort_unstable();
        let expected: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
        if path != expected {
            return invariant("scene edges must form the ordered scene path".into());
        }

        let mut scene_of = HashMap::new();
        for &(s, d) in &self.edges.sd {
            if scene_of.insert(d, s).is_some() {
                return invariant(format!("dialogue {d} has more than one scene edge"));
            }
        }
        let mut speaker_of = HashMap::new();
        for &(c, d) in &self.edges.cd {
            if speaker_of.insert(d, c).is_some() {
                return invariant(format!("dialogue {d} has more than one speaker edge"));
            }
        }
        // A character-stripped graph keeps its dialogues without speakers.
        let stripped = self.characters.is_empty();
        for d in dialogue_ids {
            if !scene_of.contains_key(d) || (!stripped && !speaker_of.contains_key(d)) {
                return invariant(format!("dialogue {d} lacks a scene or speaker edge"));
            }
        }
        let sc: HashSet<(usize, usize)> = self.edges.sc.iter().copied().collect();
        if sc.len() != self.edges.sc.len() {
            return invariant("duplicate scene-character edge".into());
        }
        for (d, s) in &scene_of {
            let Some(&c) = speaker_of.get(d) else { continue };
            if !sc.contains(&(*s, c)) {
                return invariant(format!("speaker of dialogue {d} is not linked to scene {s}"));
            }
        }
        Ok(())
    }
}
