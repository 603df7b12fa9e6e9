use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LgatConfig, LgatError, LgatModel, Variant, Vocab};
use crate::embed::Embedder;
use crate::eval::{evaluate, EvalReport};
use crate::graph::{build_graph_with, CadGraph, GraphOptions};
use crate::screenplay::Screenplay;
use crate::tensor::{Adam, AdamConfig, Tape};

/// One training pair with its graph already built.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub graph: CadGraph,
    pub script: String,
    pub summary: String,
}

impl Example {
    pub fn new(
        screenplay: &Screenplay,
        summary: &str,
        embedder: &dyn Embedder,
        options: GraphOptions,
    ) -> Result<Self, LgatError> {
        Ok(Example {
            id: screenplay.id.clone(),
            graph: build_graph_with(screenplay, embedder, options)?,
            script: screenplay.script_text(),
            summary: summary.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: Variant,
    pub steps: usize,
    /// Loss of every optimizer step, in order.
    pub losses: Vec<f64>,
    /// Mean step loss of each completed (or partial final) epoch.
    pub epoch_means: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    pub fn loss_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, l);
        }
        out
    }

    pub fn epoch_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (i, l) in self.epoch_means.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, l);
        }
        out
    }
}

/// Trains a fresh model on `corpus` with batch size one. Each epoch visits
/// the examples in a seeded shuffled order. Summaries are tokenized on
/// whitespace; tokens below the frequency cutoff become `<unk>`, and targets
/// longer than the decoder allows are truncated. When `out` is given the
/// checkpoint, `loss.csv`, and `epochs.csv` are written there.
pub fn train(
    corpus: &[Example],
    config: &LgatConfig,
    variant: Variant,
    out: Option<&Path>,
) -> Result<(LgatModel, TrainReport), LgatError> {
    if corpus.is_empty() {
        return Err(LgatError::EmptyCorpus);
    }
    let vocab = Vocab::build(corpus.iter().map(|e| e.summary.as_str()), config.vocab_min_freq);
    let mut model = LgatModel::new(config.clone(), vocab, variant)?;
    let targets: Vec<Vec<usize>> = corpus
        .iter()
        .map(|e| {
            let mut ids = model.vocab.encode_lossy(&e.summary);
            ids.truncate(config.max_target_len - 1);
            ids
        })
        .collect();

    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() });
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_5546);
    let limit = config.max_steps.unwrap_or(usize::MAX);
    let mut report = TrainReport { variant, steps: 0, losses: Vec::new(), epoch_means: Vec::new() };
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    'epochs: for _ in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_total = 0.0;
        let mut epoch_steps = 0;
        for &k in &order {
            if report.steps >= limit {
                break;
            }
            let step = report.steps;
            let tape = Tape::training(config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(step as u64));
            let example = &corpus[k];
            let loss = model.loss_on(&tape, &example.graph, &example.script, &targets[k])?;
            let value = loss.value().item();
            if !value.is_finite() {
                return Err(LgatError::NonFinite { step, example: k, detail: format!("loss {value}") });
            }
            let grads = tape.backward(loss)?;
            drop(tape);
            model.store.zero_grad();
            model.store.accumulate(&grads);
            adam.step(&mut model.store).map_err(|e| LgatError::NonFinite {
                step,
                example: k,
                detail: e.to_string(),
            })?;
            report.losses.push(value);
            report.steps += 1;
            epoch_total += value;
            epoch_steps += 1;
        }
        if epoch_steps > 0 {
            report.epoch_means.push(epoch_total / epoch_steps as f64);
        }
        if report.steps >= limit {
            break 'epochs;
        }
    }

    if let Some(dir) = out {
        model.save(dir, report.steps as u64)?;
        fs::write(dir.join("loss.csv"), report.loss_csv())?;
        fs::write(dir.join("epochs.csv"), report.epoch_csv())?;
    }
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub variant: Variant,
    pub train_ids: Vec<String>,
    pub eval_ids: Vec<String>,
    pub train: TrainReport,
    /// Mean over the evaluated pairs.
    pub eval: EvalReport,
    pub per_example: Vec<(String, EvalReport)>,
}

/// Trains `variant` and scores greedy summaries with the eval metrics.
/// With two or more pairs the last `max(1, n / 5)` are held out; a single
/// pair is both trained on and evaluated.
pub fn run_ablation(
    corpus: &[Example],
    variant: Variant,
    config: &LgatConfig,
    out: Option<&Path>,
) -> Result<AblationReport, LgatError> {
    if corpus.is_empty() {
        return Err(LgatError::EmptyCorpus);
    }
    let held = if corpus.len() >= 2 { (corpus.len() / 5).max(1) } else { 0 };
    let (train_set, eval_set) = if held == 0 {
        (corpus, corpus)
    } else {
        corpus.split_at(corpus.len() - held)
    };
    let (model, train_report) = train(train_set, config, variant, out)?;
    let embedder = config.embedder.build()?;
    let mut per_example = Vec::with_capacity(eval_set.len());
    for e in eval_set {
        let summary = model.summarize(&e.graph, &e.script)?;
        per_example.push((e.id.clone(), evaluate(&summary, &e.summary, embedder.as_ref())?));
    }
    let reports: Vec<EvalReport> = per_example.iter().map(|(_, r)| r.clone()).collect();
    let report = AblationReport {
        schema_version: 1,
        variant,
        train_ids: train_set.iter().map(|e| e.id.clone()).collect(),
        eval_ids: eval_set.iter().map(|e| e.id.clone()).collect(),
        train: train_report,
        eval: EvalReport::mean(&reports),
        per_example,
    };
    if let Some(dir) = out {
        let json = serde_json::to_vec_pretty(&report).map_err(|e| LgatError::Checkpoint(e.to_string()))?;
        fs::write(dir.join("ablation.json"), json)?;
    }
    Ok(report)
}
