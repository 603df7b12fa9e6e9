//! Character embedding analysis: final-layer character features, a 3-D PCA
//! projection, K-Means clustering, and scatter export.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::CadGraph;
use crate::lgat::{LgatError, LgatModel};

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_KMEANS_ITERS: usize = 100;

/// Eigenvalues at or below this fraction of the largest count as zero variance.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Lgat(#[from] LgatError),
    #[error("graph has no character nodes")]
    NoCharacters,
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("points have inconsistent dimensions")]
    DimensionMismatch,
    #[error("cannot write {path}: {source}")]
    UnwritableFile { path: PathBuf, source: std::io::Error },
}

/// Final GAT-layer features of every character node, keyed by character id.
pub fn extract_character_embeddings(
    model: &LgatModel,
    graph: &CadGraph,
) -> Result<BTreeMap<usize, Vec<f64>>, AnalysisError> {
    if graph.dim != model.config.graph_dim {
        return Err(AnalysisError::ConfigMismatch(format!(
            "graph dimension {} differs from checkpoint graph_dim {}",
            graph.dim, model.config.graph_dim
        )));
    }
    if graph.characters.is_empty() {
        return Err(AnalysisError::NoCharacters);
    }
    let enc = model.encode_graph(graph)?;
    Ok(enc.character_rows().into_iter().map(|(id, row)| (id, row.to_vec())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit component vectors, largest variance first.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component.
    pub variances: Vec<f64>,
    /// Components carrying no variance (input rank below three).
    pub degenerate: Vec<bool>,
    pub projections: Vec<[f64; 3]>,
}

fn check_points(points: &[Vec<f64>], needed: usize) -> Result<usize, AnalysisError> {
    if points.len() < needed {
        return Err(AnalysisError::TooFewPoints { needed, got: points.len() });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(AnalysisError::DimensionMismatch);
    }
    Ok(dim)
}

/// Top-`count` principal components of `points`, sorted by variance, with
/// each component's largest-magnitude entry made nonnegative.
pub fn principal_components(points: &[Vec<f64>], count: usize) -> Result<Pca, AnalysisError> {
    let dim = check_points(points, 1)?;
    if dim < count {
        return Err(AnalysisError::TooFewPoints { needed: count, got: dim });
    }
    let n = points.len();
    let mean: Vec<f64> = (0..dim).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, dim, |i, j| points[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let largest = eig.eigenvalues[order[0]].max(0.0);
    let mut components = Vec::with_capacity(count);
    let mut variances = Vec::with_capacity(count);
    let mut degenerate = Vec::with_capacity(count);
    for &k in order.iter().take(count) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let variance = eig.eigenvalues[k].max(0.0);
        degenerate.push(variance <= RANK_TOL * largest.max(f64::MIN_POSITIVE) || largest == 0.0);
        variances.push(variance);
        components.push(v);
    }
    let projections = points
        .iter()
        .map(|p| {
            let mut out = [0.0; 3];
            for (c, comp) in components.iter().take(3).enumerate() {
                out[c] = comp.iter().zip(p).zip(&mean).map(|((w, x), m)| w * (x - m)).sum();
            }
            out
        })
        .collect();
    Ok(Pca { mean, components, variances, degenerate, projections })
}

/// PCA to three dimensions; needs at least three points of dimension three.
pub fn pca_3d(points: &[Vec<f64>]) -> Result<Pca, AnalysisError> {
    check_points(points, 3)?;
    principal_components(points, 3)
}

/// Mean squared reconstruction error keeping the first `k` components.
pub fn reconstruction_error(points: &[Vec<f64>], pca: &Pca, k: usize) -> f64 {
    let mut total = 0.0;
    for p in points {
        let centered: Vec<f64> = p.iter().zip(&pca.mean).map(|(x, m)| x - m).collect();
        let mut residual = centered.clone();
        for comp in pca.components.iter().take(k) {
            let w: f64 = comp.iter().zip(&centered).map(|(a, b)| a * b).sum();
            residual.iter_mut().zip(comp).for_each(|(r, c)| *r -= w * c);
        }
        total += residual.iter().map(|r| r * r).sum::<f64>();
    }
    total / points.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after each iteration.
    pub inertia_trace: Vec<f64>,
    pub converged: bool,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        self.inertia_trace.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[nearest(p, &centroids)])).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = d2.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[pick].clone());
    }
    centroids
}

/// K-Means with k-means++ seeding and Lloyd iterations until the assignment
/// stops changing or [`MAX_KMEANS_ITERS`] is reached. A cluster left empty
/// takes the point farthest from its centroid among clusters of size two or
/// more.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans, AnalysisError> {
    let dim = check_points(points, k.max(1))?;
    let k = k.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut previous: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut assignments = Vec::new();
    for _ in 0..MAX_KMEANS_ITERS {
        assignments = points.iter().map(|p| nearest(p, &centroids)).collect::<Vec<_>>();
        loop {
            let mut sizes = vec![0usize; k];
            assignments.iter().for_each(|&a| sizes[a] += 1);
            let Some(empty) = sizes.iter().position(|&s| s == 0) else { break };
            let far = (0..points.len())
                .filter(|&i| sizes[assignments[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(&points[a], &centroids[assignments[a]]);
                    let db = sq_dist(&points[b], &centroids[assignments[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("k does not exceed the number of points");
            assignments[far] = empty;
            centroids[empty] = points[far].clone();
        }
        if previous.as_ref() == Some(&assignments) {
            converged = true;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
        trace.push(points.iter().zip(&assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum());
        if converged {
            break;
        }
        previous = Some(assignments.clone());
    }
    Ok(KMeans { assignments, centroids, inertia_trace: trace, converged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterAnalysis {
    pub ids: Vec<usize>,
    pub names: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
    pub pca: Pca,
    pub k: usize,
    pub clusters: KMeans,
}

/// Extracts character features, projects them to 3-D, and clusters the
/// projections into `k` groups.
pub fn analyze_characters(
    model: &LgatModel,
    graph: &CadGraph,
    k: usize,
    seed: u64,
) -> Result<CharacterAnalysis, AnalysisError> {
    let embeddings = extract_character_embeddings(model, graph)?;
    let ids: Vec<usize> = embeddings.keys().copied().collect();
    let names = ids.iter().map(|&id| graph.character_name(id).unwrap_or_default().to_string()).collect();
    let vectors: Vec<Vec<f64>> = embeddings.into_values().collect();
    let pca = pca_3d(&vectors)?;
    let coords: Vec<Vec<f64>> = pca.projections.iter().map(|p| p.to_vec()).collect();
    let clusters = kmeans(&coords, k, seed)?;
    Ok(CharacterAnalysis { ids, names, embeddings: vectors, pca, k, clusters })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub id: usize,
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatter {
    pub schema_version: u32,
    pub k: usize,
    pub points: Vec<ScatterPoint>,
}

impl CharacterAnalysis {
    pub fn scatter(&self) -> Scatter {
        let points = self
            .ids
            .iter()
            .zip(&self.names)
            .zip(&self.pca.projections)
            .zip(&self.clusters.assignments)
            .map(|(((&id, name), p), &cluster)| ScatterPoint { id, name: name.clone(), x: p[0], y: p[1], z: p[2], cluster })
            .collect();
        Scatter { schema_version: SCHEMA_VERSION, k: self.k, points }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), AnalysisError> {
    fs::write(path, bytes).map_err(|source| AnalysisError::UnwritableFile { path: path.to_path_buf(), source })
}

/// Writes the scatter JSON to `path` and, when given, a CSV mirror.
pub fn export_scatter(analysis: &CharacterAnalysis, path: &Path, csv: Option<&Path>) -> Result<Scatter, AnalysisError> {
    let scatter = analysis.scatter();
    let json = serde_json::to_vec_pretty(&scatter).expect("scatter serializes");
    write(path, &json)?;
    if let Some(csv_path) = csv {
        let mut out = String::from("id,name,x,y,z,cluster\n");
        for p in &scatter.points {
            let name = if p.name.contains([',', '"']) { format!("\"{}\"", p.name.replace('"', "\"\"")) } else { p.name.clone() };
            out.push_str(&format!("{},{},{},{},{},{}\n", p.id, name, p.x, p.y, p.z, p.cluster));
        }
        write(csv_path, out.as_bytes())?;
    }
    Ok(scatter)
}
