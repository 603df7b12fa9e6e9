//! Summary metrics: ROUGE-N, ROUGE-L, an embedding-matching score, and
//! novel n-gram percentages.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, tokenize, EmbedError, Embedder};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Scores {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Scores { precision, recall, f1 }
    }

    fn mean(items: &[Scores]) -> Scores {
        let n = items.len().max(1) as f64;
        Scores {
            precision: items.iter().map(|s| s.precision).sum::<f64>() / n,
            recall: items.iter().map(|s| s.recall).sum::<f64>() / n,
            f1: items.iter().map(|s| s.f1).sum::<f64>() / n,
        }
    }
}

fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = &[String]> {
    let count = if n == 0 { 0 } else { tokens.len().saturating_sub(n - 1) };
    (0..count).map(move |i| &tokens[i..i + n])
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for g in ngrams(tokens, n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap over lowercase alphanumeric tokens.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Scores {
    let (cand, refr) = (tokenize(candidate), tokenize(reference));
    let (c, r) = (ngram_counts(&cand, n), ngram_counts(&refr, n));
    let (c_total, r_total): (usize, usize) = (c.values().sum(), r.values().sum());
    if c_total == 0 || r_total == 0 {
        return Scores::default();
    }
    let overlap: usize = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    Scores::new(overlap as f64 / c_total as f64, overlap as f64 / r_total as f64)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Token-level longest-common-subsequence scores.
pub fn rouge_l(candidate: &str, reference: &str) -> Scores {
    let (cand, refr) = (tokenize(candidate), tokenize(reference));
    if cand.is_empty() || refr.is_empty() {
        return Scores::default();
    }
    let l = lcs_len(&cand, &refr) as f64;
    Scores::new(l / cand.len() as f64, l / refr.len() as f64)
}

/// Greedy token matching by cosine similarity of per-token embeddings.
/// Recall averages each reference token's best match, precision each
/// candidate token's.
pub fn embed_score(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<Scores, EmbedError> {
    let embed_all = |text: &str| -> Result<Vec<Vec<f64>>, EmbedError> {
        tokenize(text).iter().map(|t| embedder.embed(t)).collect()
    };
    let (cand, refr) = (embed_all(candidate)?, embed_all(reference)?);
    if cand.is_empty() || refr.is_empty() {
        return Ok(Scores::default());
    }
    let sim: Vec<Vec<f64>> = cand.iter().map(|c| refr.iter().map(|r| cosine(c, r)).collect()).collect();
    let best = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    let precision = sim.iter().map(|row| best(&mut row.iter().copied())).sum::<f64>() / cand.len() as f64;
    let recall = (0..refr.len()).map(|j| best(&mut sim.iter().map(|row| row[j]))).sum::<f64>() / refr.len() as f64;
    Ok(Scores::new(precision, recall))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub rouge1: Scores,
    pub rouge2: Scores,
    #[serde(rename = "rougeL")]
    pub rouge_l: Scores,
    pub embed_p: f64,
    pub embed_r: f64,
    pub embed_f1: f64,
    pub candidate_tokens: usize,
    pub reference_tokens: usize,
}

pub fn evaluate(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<EvalReport, EmbedError> {
    let embed = embed_score(candidate, reference, embedder)?;
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        rouge1: rouge_n(candidate, reference, 1),
        rouge2: rouge_n(candidate, reference, 2),
        rouge_l: rouge_l(candidate, reference),
        embed_p: embed.precision,
        embed_r: embed.recall,
        embed_f1: embed.f1,
        candidate_tokens: tokenize(candidate).len(),
        reference_tokens: tokenize(reference).len(),
    })
}

impl EvalReport {
    /// Macro average; token counts are summed.
    pub fn mean(reports: &[EvalReport]) -> EvalReport {
        let n = reports.len().max(1) as f64;
        let pick = |f: fn(&EvalReport) -> Scores| Scores::mean(&reports.iter().map(f).collect::<Vec<_>>());
        EvalReport {
            schema_version: SCHEMA_VERSION,
            rouge1: pick(|r| r.rouge1),
            rouge2: pick(|r| r.rouge2),
            rouge_l: pick(|r| r.rouge_l),
            embed_p: reports.iter().map(|r| r.embed_p).sum::<f64>() / n,
            embed_r: reports.iter().map(|r| r.embed_r).sum::<f64>() / n,
            embed_f1: reports.iter().map(|r| r.embed_f1).sum::<f64>() / n,
            candidate_tokens: reports.iter().map(|r| r.candidate_tokens).sum(),
            reference_tokens: reports.iter().map(|r| r.reference_tokens).sum(),
        }
    }

    /// True when every ROUGE value lies in [0, 1] and embedding scores in [-1, 1].
    pub fn is_well_formed(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let rouge_ok = [self.rouge1, self.rouge2, self.rouge_l]
            .iter()
            .all(|s| unit(s.precision) && unit(s.recall) && unit(s.f1));
        let tol = 1e-9;
        let embed_ok = [self.embed_p, self.embed_r, self.embed_f1].iter().all(|x| x.abs() <= 1.0 + tol);
        rouge_ok && embed_ok
    }
}

pub const CSV_HEADER: &str = "movie,variant,rouge1_p,rouge1_r,rouge1_f1,rouge2_p,rouge2_r,rouge2_f1,\
rougeL_p,rougeL_r,rougeL_f1,embed_p,embed_r,embed_f1,candidate_tokens,reference_tokens";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One CSV row per `(movie, variant, report)`, header first.
pub fn reports_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, &'a EvalReport)>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (movie, variant, r) in rows {
        let nums = [r.rouge1, r.rouge2, r.rouge_l]
            .iter()
            .flat_map(|s| [s.precision, s.recall, s.f1])
            .chain([r.embed_p, r.embed_r, r.embed_f1])
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_field(movie),
            csv_field(variant),
            nums,
            r.candidate_tokens,
            r.reference_tokens
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramNovelty {
    pub n: usize,
    /// Distinct summary n-grams.
    pub total: usize,
    pub novel: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyReport {
    pub schema_version: u32,
    pub ngrams: Vec<NgramNovelty>,
}

impl NoveltyReport {
    pub fn percent(&self, n: usize) -> Option<f64> {
        self.ngrams.iter().find(|g| g.n == n).map(|g| g.percent)
    }
}

/// Percentage of distinct summary n-grams (n = 1..=4) absent from the script.
pub fn ngram_novelty(summary: &str, script: &str) -> NoveltyReport {
    let (sum, src) = (tokenize(summary), tokenize(script));
    let ngrams = (1..=4)
        .map(|n| {
            let source: HashSet<&[String]> = ngrams(&src, n).collect();
            let distinct: HashSet<&[String]> = ngrams(&sum, n).collect();
            let novel = distinct.iter().filter(|g| !source.contains(*g)).count();
            let percent = if distinct.is_empty() { 0.0 } else { 100.0 * novel as f64 / distinct.len() as f64 };
            NgramNovelty { n, total: distinct.len(), novel, percent }
        })
        .collect();
    NoveltyReport { schema_version: SCHEMA_VERSION, ngrams }
}
