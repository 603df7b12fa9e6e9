//! Python bindings: screenplay parsing, graph construction, metrics,
//! extractive and abstractive summarization, and character analysis.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use sgcore::analysis;
use sgcore::corpus;
use sgcore::embed::{Embedder, HashingEmbedder as CoreHashingEmbedder, DEFAULT_DIM};
use sgcore::eval;
use sgcore::graph::{self, CadGraph, ExportFormat, GraphOptions};
use sgcore::lgat::{self, LgatConfig, LgatModel, Variant};
use sgcore::screenplay;
use sgcore::summarize;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json(value: &impl serde::Serialize) -> PyResult<String> {
    serde_json::to_string(value).map_err(value_error)
}

fn lgat_error(e: lgat::LgatError) -> PyErr {
    match e {
        lgat::LgatError::Io(io) => PyIOError::new_err(io.to_string()),
        other => value_error(other),
    }
}

#[pyclass(module = "screengraph", frozen, from_py_object)]
#[derive(Clone)]
pub struct Screenplay {
    inner: screenplay::Screenplay,
}

#[pymethods]
impl Screenplay {
    #[staticmethod]
    fn from_xml(text: &str) -> PyResult<Self> {
        screenplay::parse_xml(text.as_bytes()).map(|inner| Screenplay { inner }).map_err(value_error)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        screenplay::parse_plaintext(text).map(|inner| Screenplay { inner }).map_err(value_error)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: screenplay::Screenplay = serde_json::from_str(text).map_err(value_error)?;
        inner.validate().map_err(value_error)?;
        Ok(Screenplay { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        corpus::load_screenplay(&path, None).map(|inner| Screenplay { inner }).map_err(value_error)
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn title(&self) -> &str {
        &self.inner.title
    }

    #[getter]
    fn scene_count(&self) -> usize {
        self.inner.scenes.len()
    }

    #[getter]
    fn dialogue_count(&self) -> usize {
        self.inner.dialogue_count()
    }

    /// Normalized character names in order of first appearance.
    fn characters(&self) -> Vec<String> {
        self.inner.registry().names().to_vec()
    }

    fn script_text(&self) -> String {
        self.inner.script_text()
    }

    fn to_xml(&self) -> String {
        self.inner.to_xml()
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Screenplay(id={:?}, scenes={}, dialogues={})",
            self.inner.id,
            self.inner.scenes.len(),
            self.inner.dialogue_count()
        )
    }
}

#[pyclass(module = "screengraph", frozen)]
pub struct HashingEmbedder {
    inner: CoreHashingEmbedder,
}

#[pymethods]
impl HashingEmbedder {
    #[new]
    #[pyo3(signature = (dim = DEFAULT_DIM, seed = 0))]
    fn new(dim: usize, seed: u64) -> PyResult<Self> {
        CoreHashingEmbedder::new(dim, seed).map(|inner| HashingEmbedder { inner }).map_err(value_error)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> PyResult<Vec<f64>> {
        self.inner.embed(text).map_err(value_error)
    }
}

#[pyclass(module = "screengraph", frozen)]
pub struct Graph {
    inner: CadGraph,
}

#[pymethods]
impl Graph {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        graph::import_graph(text.as_bytes()).map(|inner| Graph { inner }).map_err(value_error)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    /// Edge lists keyed `ss`, `sd`, `sc`, `cd`.
    fn edges(&self) -> Vec<(&'static str, Vec<(usize, usize)>)> {
        let e = &self.inner.edges;
        vec![("ss", e.ss.clone()), ("sd", e.sd.clone()), ("sc", e.sc.clone()), ("cd", e.cd.clone())]
    }

    fn character_names(&self) -> Vec<String> {
        self.inner.characters.iter().map(|c| c.name.clone()).collect()
    }

    fn stats_json(&self) -> PyResult<String> {
        to_json(&graph::graph_stats(&self.inner))
    }

    fn strip_characters(&self) -> Graph {
        Graph { inner: graph::strip_characters(&self.inner) }
    }

    /// Serializes as `json`, `gexf`, or `dot`.
    #[pyo3(signature = (format = "json"))]
    fn export(&self, format: &str) -> PyResult<String> {
        let format: ExportFormat = format.parse().map_err(value_error)?;
        String::from_utf8(graph::export_graph(&self.inner, format)).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(scenes={}, dialogues={}, characters={}, edges={})",
            self.inner.scenes.len(),
            self.inner.dialogues.len(),
            self.inner.characters.len(),
            self.inner.edges.len()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (screenplay, embedder, include_mentions = false, include_heading = false))]
fn build_graph(
    screenplay: &Screenplay,
    embedder: &HashingEmbedder,
    include_mentions: bool,
    include_heading: bool,
) -> PyResult<Graph> {
    let options = GraphOptions { include_mentions, include_heading };
    graph::build_graph_with(&screenplay.inner, &embedder.inner, options)
        .map(|inner| Graph { inner })
        .map_err(value_error)
}

/// ROUGE-N as `(precision, recall, f1)`.
#[pyfunction]
fn rouge_n(candidate: &str, reference: &str, n: usize) -> (f64, f64, f64) {
    let s = eval::rouge_n(candidate, reference, n);
    (s.precision, s.recall, s.f1)
}

/// ROUGE-L as `(precision, recall, f1)`.
#[pyfunction]
fn rouge_l(candidate: &str, reference: &str) -> (f64, f64, f64) {
    let s = eval::rouge_l(candidate, reference);
    (s.precision, s.recall, s.f1)
}

/// Percent of distinct summary n-grams absent from the script, for n = 1..4.
#[pyfunction]
fn ngram_novelty(summary: &str, script: &str) -> Vec<(usize, f64)> {
    eval::ngram_novelty(summary, script).ngrams.iter().map(|g| (g.n, g.percent)).collect()
}

#[pyfunction]
fn evaluate_json(candidate: &str, reference: &str, embedder: &HashingEmbedder) -> PyResult<String> {
    to_json(&eval::evaluate(candidate, reference, &embedder.inner).map_err(value_error)?)
}

#[pyfunction]
fn textrank(vectors: Vec<Vec<f64>>) -> Vec<f64> {
    summarize::textrank(&vectors, summarize::TextRankParams::default()).scores
}

/// Top-`k` scenes as `(scene, score, text)` in screenplay order.
#[pyfunction]
#[pyo3(signature = (screenplay, embedder, k = 3))]
fn summarize_extractive(
    screenplay: &Screenplay,
    embedder: &HashingEmbedder,
    k: usize,
) -> PyResult<Vec<(usize, f64, String)>> {
    let excerpts = summarize::summarize_extractive(&screenplay.inner, &embedder.inner, k).map_err(value_error)?;
    Ok(excerpts.into_iter().map(|e| (e.scene, e.score, e.text)).collect())
}

type PcaTuple = (Vec<Vec<f64>>, Vec<f64>, Vec<[f64; 3]>);

/// Principal components of `points`: `(components, variances, projections)`.
#[pyfunction]
#[pyo3(signature = (points, count = 3))]
fn pca(points: Vec<Vec<f64>>, count: usize) -> PyResult<PcaTuple> {
    let p = analysis::principal_components(&points, count).map_err(value_error)?;
    Ok((p.components, p.variances, p.projections))
}

/// K-Means clustering: `(assignments, inertia_trace)`.
#[pyfunction]
#[pyo3(signature = (points, k, seed = 0))]
fn kmeans(points: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let km = analysis::kmeans(&points, k, seed).map_err(value_error)?;
    Ok((km.assignments, km.inertia_trace))
}

#[pyclass(module = "screengraph", frozen)]
pub struct Model {
    inner: LgatModel,
}

fn config_from(json: Option<&str>) -> PyResult<LgatConfig> {
    let base = LgatConfig::desk();
    let Some(json) = json else { return Ok(base) };
    let patch: serde_json::Value = serde_json::from_str(json).map_err(value_error)?;
    base.with_overrides(&patch).map_err(lgat_error)
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        LgatModel::load(&path).map(|inner| Model { inner }).map_err(lgat_error)
    }

    /// Trains on `(screenplay, summary)` pairs. `config` is a JSON object of
    /// overrides on the desk profile. Returns the model and per-step losses.
    #[staticmethod]
    #[pyo3(signature = (pairs, config = None, variant = "full", out = None))]
    fn train(
        py: Python<'_>,
        pairs: Vec<(Screenplay, String)>,
        config: Option<&str>,
        variant: &str,
        out: Option<PathBuf>,
    ) -> PyResult<(Model, Vec<f64>)> {
        let config = config_from(config)?;
        let variant: Variant = variant.parse().map_err(lgat_error)?;
        let pairs: Vec<_> = pairs.into_iter().map(|(s, t)| (s.inner, t)).collect();
        let examples = corpus::build_examples(&pairs, &config).map_err(value_error)?;
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
        }
        let (model, report) = py
            .detach(|| lgat::train(&examples, &config, variant, out.as_deref()))
            .map_err(lgat_error)?;
        Ok((Model { inner: model }, report.losses))
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.as_str()
    }

    fn config_json(&self) -> PyResult<String> {
        to_json(&self.inner.config)
    }

    fn summarize(&self, py: Python<'_>, screenplay: &Screenplay) -> PyResult<String> {
        let embedder = self.inner.config.embedder.build().map_err(value_error)?;
        py.detach(|| summarize::summarize_abstractive(&self.inner, &screenplay.inner, embedder.as_ref()))
            .map_err(lgat_error)
    }

    /// Final-layer character features keyed by character id.
    fn character_embeddings(&self, graph: &Graph) -> PyResult<Vec<(usize, Vec<f64>)>> {
        let rows = analysis::extract_character_embeddings(&self.inner, &graph.inner).map_err(value_error)?;
        Ok(rows.into_iter().collect())
    }

    /// Character scatter (PCA to 3-D, then K-Means) as JSON.
    #[pyo3(signature = (graph, k = 2, seed = 0))]
    fn analyze_characters_json(&self, graph: &Graph, k: usize, seed: u64) -> PyResult<String> {
        let analysis = analysis::analyze_characters(&self.inner, &graph.inner, k, seed).map_err(value_error)?;
        to_json(&analysis.scatter())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        self.inner.save(&path, 0).map_err(lgat_error)
    }
}

#[pymodule]
fn screengraph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Screenplay>()?;
    m.add_class::<HashingEmbedder>()?;
    m.add_class::<Graph>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(build_graph, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_n, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(ngram_novelty, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_json, m)?)?;
    m.add_function(wrap_pyfunction!(textrank, m)?)?;
    m.add_function(wrap_pyfunction!(summarize_extractive, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add("DEFAULT_DIM", DEFAULT_DIM)?;
    Ok(())
}
