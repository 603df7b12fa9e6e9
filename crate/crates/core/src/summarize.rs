//! Abstractive summaries from a trained checkpoint and an extractive
//! TextRank baseline over scenes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, EmbedError, Embedder};
use crate::graph::build_graph_with;
use crate::lgat::{LgatError, LgatModel};
use crate::screenplay::Screenplay;

/// Builds the graph with `embedder`, encodes, fuses, and greedy-decodes.
pub fn summarize_abstractive(
    model: &LgatModel,
    screenplay: &Screenplay,
    embedder: &dyn Embedder,
) -> Result<String, LgatError> {
    model.check_embedder_dim(embedder.dim())?;
    let graph = build_graph_with(screenplay, embedder, model.config.graph)?;
    model.summarize(&graph, &screenplay.script_text())
}

/// Loads the checkpoint in `dir` and summarizes `screenplay`.
pub fn summarize_checkpoint(dir: &Path, screenplay: &Screenplay, embedder: &dyn Embedder) -> Result<String, LgatError> {
    summarize_abstractive(&LgatModel::load(dir)?, screenplay, embedder)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextRankParams {
    pub threshold: f64,
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for TextRankParams {
    fn default() -> Self {
        TextRankParams { threshold: 0.1, damping: 0.85, tol: 1e-8, max_iters: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRankScores {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// PageRank over the weighted graph whose edges join vectors with cosine
/// similarity above `threshold`. Dangling nodes spread their mass uniformly.
pub fn textrank(vectors: &[Vec<f64>], params: TextRankParams) -> TextRankScores {
    let n = vectors.len();
    if n == 0 {
        return TextRankScores { scores: Vec::new(), iterations: 0, converged: true };
    }
    let mut weights = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let s = cosine(&vectors[i], &vectors[j]);
            if s > params.threshold {
                weights[i][j] = s;
                weights[j][i] = s;
            }
        }
    }
    let out_weight: Vec<f64> = weights.iter().map(|row| row.iter().sum()).collect();
    let uniform = 1.0 / n as f64;
    let mut scores = vec![uniform; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iters {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&j| out_weight[j] == 0.0).map(|j| scores[j]).sum();
        let mut next = vec![0.0; n];
        for (i, slot) in next.iter_mut().enumerate() {
            let incoming: f64 = (0..n)
                .filter(|&j| weights[j][i] > 0.0)
                .map(|j| weights[j][i] / out_weight[j] * scores[j])
                .sum();
            *slot = (1.0 - params.damping) * uniform + params.damping * (incoming + dangling * uniform);
        }
        let delta: f64 = next.iter().zip(&scores).map(|(a, b)| (a - b).abs()).sum();
        scores = next;
        if delta < params.tol {
            converged = true;
            break;
        }
    }
    TextRankScores { scores, iterations, converged }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneExcerpt {
    pub scene: usize,
    pub score: f64,
    pub text: String,
}

/// Top-`k` scenes by TextRank score over scene-text embeddings, returned in
/// screenplay order. Ties go to the lower scene index.
pub fn summarize_extractive(
    screenplay: &Screenplay,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Vec<SceneExcerpt>, EmbedError> {
    let texts: Vec<String> = screenplay.scenes.iter().map(|s| s.full_text()).collect();
    let vectors = texts.iter().map(|t| embedder.embed(t)).collect::<Result<Vec<_>, _>>()?;
    let ranked = textrank(&vectors, TextRankParams::default());
    let mut order: Vec<usize> = (0..texts.len()).collect();
    order.sort_by(|&a, &b| ranked.scores[b].total_cmp(&ranked.scores[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(k.max(1)).collect();
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|i| SceneExcerpt { scene: screenplay.scenes[i].index, score: ranked.scores[i], text: texts[i].clone() })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashingEmbedder;
    use crate::screenplay::parse_xml;
    use proptest::prelude::*;

    #[test]
    fn identical_pair_wins_with_lower_index() {
        let xml = br#"<screenplay>
            <scene><action>Rain falls on the harbor town tonight.</action></scene>
            <scene><action>Zebra quartz jukebox vexed.</action></scene>
            <scene><action>Rain falls on the harbor town tonight.</action></scene>
        </screenplay>"#;
        let sp = parse_xml(xml).unwrap();
        let e = HashingEmbedder::default();
        let picked = summarize_extractive(&sp, &e, 1).unwrap();
        assert_eq!(picked.len(), 1);
        assert_eq!(picked[0].scene, 0);
        let all = summarize_extractive(&sp, &e, 10).unwrap();
        assert_eq!(all.iter().map(|x| x.scene).collect::<Vec<_>>(), vec![0, 1, 2]);
        let total: f64 = all.iter().map(|x| x.score).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    fn vectors() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..8).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), n))
    }

    proptest! {
        #[test]
        fn scores_form_a_distribution(v in vectors()) {
            let r = textrank(&v, TextRankParams::default());
            prop_assert!(r.converged);
            prop_assert!(r.scores.iter().all(|&s| s >= 0.0));
            prop_assert!((r.scores.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
