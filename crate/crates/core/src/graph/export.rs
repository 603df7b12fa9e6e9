use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CadGraph, GraphError, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Gexf,
    Dot,
}

impl FromStr for ExportFormat {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "gexf" => Ok(ExportFormat::Gexf),
            "dot" | "gv" => Ok(ExportFormat::Dot),
            other => Err(GraphError::UnsupportedFormat(other.to_string())),
        }
    }
}

fn node_id(kind: NodeKind, id: usize) -> String {
    format!("{}{id}", kind.prefix())
}

struct Node {
    key: String,
    kind: NodeKind,
    label: String,
}

struct Edge {
    source: String,
    target: String,
    etype: &'static str,
}

fn nodes(graph: &CadGraph) -> Vec<Node> {
    let scenes = graph.scenes.iter().map(|n| Node {
        key: node_id(NodeKind::Scene, n.id),
        kind: NodeKind::Scene,
        label: format!("scene {}", n.id),
    });
    let dialogues = graph.dialogues.iter().map(|n| Node {
        key: node_id(NodeKind::Dialogue, n.id),
        kind: NodeKind::Dialogue,
        label: format!("dialogue {}", n.id),
    });
    let characters = graph.characters.iter().map(|n| Node {
        key: node_id(NodeKind::Character, n.id),
        kind: NodeKind::Character,
        label: n.name.clone(),
    });
    scenes.chain(dialogues).chain(characters).collect()
}

fn edges(graph: &CadGraph) -> Vec<Edge> {
    let typed = [
        ("ss", NodeKind::Scene, NodeKind::Scene, &graph.edges.ss),
        ("sd", NodeKind::Scene, NodeKind::Dialogue, &graph.edges.sd),
        ("sc", NodeKind::Scene, NodeKind::Character, &graph.edges.sc),
        ("cd", NodeKind::Character, NodeKind::Dialogue, &graph.edges.cd),
    ];
    typed
        .into_iter()
        .flat_map(|(etype, ka, kb, list)| {
            list.iter().map(move |&(a, b)| Edge {
                source: node_id(ka, a),
                target: node_id(kb, b),
                etype,
            })
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn to_gexf(graph: &CadGraph) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<gexf xmlns=\"http://gexf.net/1.2\" version=\"1.2\">\n");
    out.push_str("  <graph mode=\"static\" defaultedgetype=\"undirected\">\n");
    out.push_str("    <attributes class=\"node\">\n      <attribute id=\"ntype\" title=\"ntype\" type=\"string\"/>\n    </attributes>\n");
    out.push_str("    <attributes class=\"edge\">\n      <attribute id=\"etype\" title=\"etype\" type=\"string\"/>\n    </attributes>\n");
    out.push_str("    <nodes>\n");
    for n in nodes(graph) {
        let _ = writeln!(
            out,
            "      <node id=\"{}\" label=\"{}\"><attvalues><attvalue for=\"ntype\" value=\"{}\"/></attvalues></node>",
            n.key,
            escape(&n.label),
            n.kind.as_str()
        );
    }
    out.push_str("    </nodes>\n    <edges>\n");
    for (i, e) in edges(graph).iter().enumerate() {
        let _ = writeln!(
            out,
            "      <edge id=\"{i}\" source=\"{}\" target=\"{}\"><attvalues><attvalue for=\"etype\" value=\"{}\"/></attvalues></edge>",
            e.source, e.target, e.etype
        );
    }
    out.push_str("    </edges>\n  </graph>\n</gexf>\n");
    out
}

fn to_dot(graph: &CadGraph) -> String {
    let mut out = String::from("graph cad {\n");
    for n in nodes(graph) {
        let _ = writeln!(
            out,
            "  {} [label=\"{}\", ntype=\"{}\"];",
            n.key,
            n.label.replace('\\', "\\\\").replace('"', "\\\""),
            n.kind.as_str()
        );
    }
    for e in edges(graph) {
        let _ = writeln!(out, "  {} -- {} [etype=\"{}\"];", e.source, e.target, e.etype);
    }
    out.push_str("}\n");
    out
}

/// Serializes a graph. JSON is the canonical, lossless form; GEXF and DOT
/// carry node types and labels but no embeddings.
pub fn export_graph(graph: &CadGraph, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Json => serde_json::to_vec(graph).expect("graph serializes to JSON"),
        ExportFormat::Gexf => to_gexf(graph).into_bytes(),
        ExportFormat::Dot => to_dot(graph).into_bytes(),
    }
}

/// Reads the canonical JSON form and revalidates every invariant.
pub fn import_graph(bytes: &[u8]) -> Result<CadGraph, GraphError> {
    let graph: CadGraph = serde_json::from_slice(bytes).map_err(|e| GraphError::SchemaViolation(e.to_string()))?;
    graph.validate()?;
    Ok(graph)
}
