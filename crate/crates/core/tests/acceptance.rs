mod common;

use std::fmt::Display;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use common::{brute_force_edges, close, graph_edges, heist, random_screenplay, words};
use screengraph::analysis::{kmeans, pca_3d, principal_components};
use screengraph::corpus::load_screenplay;
use screengraph::embed::HashingEmbedder;
use screengraph::eval::{ngram_novelty, rouge_l, rouge_n, Scores};
use screengraph::graph::{build_graph, strip_characters, CadGraph};
use screengraph::lgat::{run_ablation, train, Example, LgatConfig, LgatModel, Variant, Vocab};
use screengraph::screenplay::{parse_xml, Screenplay};
use screengraph::summarize::summarize_checkpoint;
use screengraph::tensor::{grad_check, Neighborhoods, Tape, Tensor, TensorError, Var};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const GRAD_EPS: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-3;
const SUM_TOL: f64 = 1e-6;

fn err(e: impl Display) -> String {
    e.to_string()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn embedder() -> HashingEmbedder {
    HashingEmbedder::new(16, 0).unwrap()
}

fn screenplays(seed: u64, count: usize) -> Vec<Screenplay> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| random_screenplay(&mut rng, &format!("s{i}"), 10)).collect()
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn graph_oracle() -> Outcome {
    let start = Instant::now();
    let e = embedder();
    let mut edges = 0;
    for sp in screenplays(11, 50) {
        let g = build_graph(&sp, &e).map_err(err)?;
        let (expected, actual) = (brute_force_edges(&sp), graph_edges(&g));
        ensure(expected == actual, || format!("{}: oracle {expected:?} != graph {actual:?}", sp.id))?;
        ensure(g.edges.len() == expected.ss.len() + expected.sd.len() + expected.sc.len() + expected.cd.len(), || {
            format!("{}: duplicate edges", sp.id)
        })?;
        edges += g.edges.len();
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("50 screenplays, {edges} edges"))
}

fn structural_counts() -> Outcome {
    let e = embedder();
    let all = screenplays(12, 200);
    for sp in &all {
        let g = build_graph(sp, &e).map_err(err)?;
        let (s, d) = (g.scenes.len(), g.dialogues.len());
        ensure(g.edges.sd.len() == d, || format!("{}: |E_sd| {} != |V_d| {d}", sp.id, g.edges.sd.len()))?;
        ensure(g.edges.cd.len() == d, || format!("{}: |E_cd| {} != |V_d| {d}", sp.id, g.edges.cd.len()))?;
        ensure(g.edges.ss.len() == s.saturating_sub(1), || format!("{}: |E_ss| {}", sp.id, g.edges.ss.len()))?;
        ensure(g.characters.iter().all(|c| c.emb.iter().all(|&x| x == 0.0)), || {
            format!("{}: nonzero character embedding", sp.id)
        })?;
    }
    Ok(format!("{} screenplays", all.len()))
}

fn scene_dialogue_json(g: &CadGraph) -> Vec<u8> {
    serde_json::to_vec(&json!({
        "dim": g.dim,
        "scenes": g.scenes,
        "dialogues": g.dialogues,
        "ss": g.edges.ss,
        "sd": g.edges.sd,
    }))
    .unwrap()
}

fn strip_structure() -> Outcome {
    let e = embedder();
    let mut with_characters = 0;
    for sp in screenplays(13, 50) {
        let g = build_graph(&sp, &e).map_err(err)?;
        with_characters += usize::from(!g.characters.is_empty());
        let s = strip_characters(&g);
        ensure(s.characters.is_empty() && s.edges.sc.is_empty() && s.edges.cd.is_empty(), || {
            format!("{}: character structure survives stripping", sp.id)
        })?;
        ensure(scene_dialogue_json(&g) == scene_dialogue_json(&s), || {
            format!("{}: scene/dialogue subgraph changed", sp.id)
        })?;
        s.validate().map_err(err)?;
    }
    Ok(format!("50 graphs, {with_characters} with characters"))
}

/// Weighted sum so each output entry receives a distinct upstream gradient.
fn probe<'t>(tape: &'t Tape, out: Var<'t>) -> Result<Var<'t>, TensorError> {
    let (r, c) = out.value().dims2();
    let mut rng = ChaCha8Rng::seed_from_u64((r * 31 + c) as u64);
    Ok(out.mul(tape.constant(random_tensor(&mut rng, r, c)))?.sum())
}

type OpCheck = Box<dyn for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>, TensorError>>;

fn op_checks(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Tensor, OpCheck)> {
    let a = random_tensor(rng, 3, 4);
    let b = random_tensor(rng, 4, 5);
    let same = random_tensor(rng, 3, 4);
    let row = random_tensor(rng, 1, 4);
    let hood = Neighborhoods::from_lists(&[vec![0, 1], vec![0, 1, 2], vec![1, 2, 3], vec![2, 3]]);
    let feats = random_tensor(rng, 4, 3);
    let logits = random_tensor(rng, 4, 1);
    let other_logits = random_tensor(rng, 4, 1);
    let (b1, a1, s1, r1, r2) = (b.clone(), a.clone(), same.clone(), row.clone(), a.clone());
    let (h1, h2, h3) = (hood.clone(), hood.clone(), hood);
    let (f2, f3) = (feats.clone(), feats.clone());
    let (l1, o1, l2, l3) = (logits.clone(), other_logits.clone(), other_logits.clone(), logits.clone());
    vec![
        ("matmul lhs", a.clone(), Box::new(move |t, x| probe(t, x.matmul(t.constant(b1.clone()))?))),
        ("matmul rhs", b.clone(), Box::new(move |t, x| probe(t, t.constant(a1.clone()).matmul(x)?))),
        ("add", a.clone(), Box::new(move |t, x| probe(t, x.add(t.constant(s1.clone()))?))),
        ("add_row", row.clone(), Box::new(move |t, x| probe(t, t.constant(r2.clone()).add_row(x)?))),
        ("mul", a.clone(), Box::new(move |t, x| probe(t, x.mul(x)?))),
        ("mul_row", a.clone(), Box::new(move |t, x| probe(t, x.mul_row(t.constant(r1.clone()))?))),
        ("mul_row gain", row.clone(), {
            let m = a.clone();
            Box::new(move |t, x| probe(t, t.constant(m.clone()).mul_row(x)?))
        }),
        ("scale", a.clone(), Box::new(|t, x| probe(t, x.scale(-1.7)))),
        ("transpose", a.clone(), Box::new(|t, x| probe(t, x.transpose()))),
        ("reshape", a.clone(), Box::new(|t, x| probe(t, x.reshape(2, 6)?))),
        ("concat rows", a.clone(), Box::new(|t, x| probe(t, Var::concat(&[x, x.scale(2.0)], 0)?))),
        ("concat cols", a.clone(), Box::new(|t, x| probe(t, Var::concat(&[x.scale(0.5), x], 1)?))),
        ("slice_cols", a.clone(), Box::new(|t, x| probe(t, x.slice_cols(1, 3)?))),
        ("slice_rows", a.clone(), Box::new(|t, x| probe(t, x.slice_rows(1, 3)?))),
        ("softmax axis 0", a.clone(), Box::new(|t, x| probe(t, x.softmax(0)?))),
        ("softmax axis 1", a.clone(), Box::new(|t, x| probe(t, x.softmax(1)?))),
        ("softmax rows", a.clone(), Box::new(|t, x| probe(t, x.softmax_rows(false)))),
        ("causal softmax rows", random_tensor(rng, 4, 4), Box::new(|t, x| probe(t, x.softmax_rows(true)))),
        ("leaky_relu", a.clone(), Box::new(|t, x| probe(t, x.leaky_relu(0.2)))),
        ("relu", a.clone(), Box::new(|t, x| probe(t, x.relu()))),
        ("elu", a.clone(), Box::new(|t, x| probe(t, x.elu()))),
        ("dropout", a.clone(), Box::new(|t, x| probe(t, x.dropout(0.3)?))),
        ("layer_norm", a.clone(), Box::new(|t, x| probe(t, x.layer_norm()))),
        ("sum", a.clone(), Box::new(|_, x| Ok(x.mul(x)?.sum()))),
        ("mean", a.clone(), Box::new(|_, x| Ok(x.mul(x)?.mean()))),
        ("mean_rows", a.clone(), Box::new(|t, x| probe(t, x.mean_rows()))),
        ("cross_entropy", a.clone(), Box::new(|_, x| x.cross_entropy(&[0, 3, 2]))),
        ("gather", a.clone(), Box::new(|t, x| probe(t, x.gather(&[2, 0, 2])?))),
        (
            "graph_attention features",
            feats,
            Box::new(move |t, x| probe(t, x.graph_attention(t.constant(l1.clone()), t.constant(o1.clone()), &h1, 0.2, 0.0)?)),
        ),
        (
            "graph_attention source",
            logits,
            Box::new(move |t, x| probe(t, t.constant(f2.clone()).graph_attention(x, t.constant(l2.clone()), &h2, 0.2, 0.0)?)),
        ),
        (
            "graph_attention target",
            other_logits,
            Box::new(move |t, x| probe(t, t.constant(f3.clone()).graph_attention(t.constant(l3.clone()), x, &h3, 0.2, 0.0)?)),
        ),
    ]
}

fn discrepancy(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_TOL)
}

fn grad_tiny_graph() -> (Screenplay, CadGraph) {
    let xml = r#"<screenplay id="tiny">
      <scene heading="INT. KITCHEN"><action>Ana burns the toast.</action>
        <dialogue speaker="ANA">Again.</dialogue><dialogue speaker="BO">Open a window.</dialogue></scene>
      <scene heading="EXT. YARD"><action>Smoke drifts.</action><dialogue speaker="BO">Better.</dialogue></scene>
      <scene heading="INT. HALL"><dialogue speaker="ANA">Who called?</dialogue></scene>
    </screenplay>"#;
    let sp = parse_xml(xml.as_bytes()).unwrap();
    let g = build_graph(&sp, &embedder()).unwrap();
    (sp, g)
}

fn composed_check(variant: Variant) -> Result<(usize, f64), String> {
    let (sp, g) = grad_tiny_graph();
    let summary = "ana burns toast and bo opens a window";
    let vocab = Vocab::build([summary], 1);
    let mut model = LgatModel::new(LgatConfig::tiny().without_dropout(), vocab, variant).map_err(err)?;
    let script = sp.script_text();
    let target = model.target_ids(summary).map_err(err)?;
    let analytic = {
        let tape = Tape::new();
        let loss = model.loss_on(&tape, &g, &script, &target).map_err(err)?;
        let grads = tape.backward(loss).map_err(err)?;
        model
            .store
            .ids()
            .map(|id| grads.param(id).cloned().unwrap_or_else(|| model.store.get(id).value.map(|_| 0.0)))
            .collect::<Vec<_>>()
    };
    let loss_at = |model: &LgatModel| -> Result<f64, String> {
        let tape = Tape::new();
        let loss = model.loss_on(&tape, &g, &script, &target).map_err(err)?;
        let value = loss.value().item();
        Ok(value)
    };
    let ids: Vec<_> = model.store.ids().collect();
    let (mut checked, mut worst) = (0, 0.0f64);
    for (k, id) in ids.into_iter().enumerate() {
        for i in 0..model.store.get(id).value.len() {
            let original = model.store.get(id).value.data()[i];
            model.store.get_mut(id).value.data_mut()[i] = original + GRAD_EPS;
            let plus = loss_at(&model)?;
            model.store.get_mut(id).value.data_mut()[i] = original - GRAD_EPS;
            let minus = loss_at(&model)?;
            model.store.get_mut(id).value.data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * GRAD_EPS);
            let d = discrepancy(analytic[k].data()[i], numeric);
            if d > GRAD_TOL {
                return Err(format!(
                    "{variant}: {}[{i}] analytic {} numeric {numeric}",
                    model.store.get(id).name,
                    analytic[k].data()[i]
                ));
            }
            worst = worst.max(d);
            checked += 1;
        }
    }
    Ok((checked, worst))
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let checks = op_checks(&mut rng);
    let mut worst_op = 0.0f64;
    for (name, x, f) in &checks {
        let r = grad_check(|t, v| f(t, v), x, GRAD_EPS, GRAD_TOL).map_err(err)?;
        ensure(r.passed, || format!("{name}: relative error {}", r.max_rel_error))?;
        worst_op = worst_op.max(r.max_rel_error);
    }
    let (_, g) = grad_tiny_graph();
    ensure(g.node_count() <= 10, || format!("{} nodes", g.node_count()))?;
    let mut coords = 0;
    let mut worst_model = 0.0f64;
    for variant in Variant::ALL {
        let (n, w) = composed_check(variant)?;
        coords += n;
        worst_model = worst_model.max(w);
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "{} ops worst {worst_op:.1e}; model {coords} coordinates on {} nodes worst {worst_model:.1e}",
        checks.len(),
        g.node_count()
    ))
}

fn attention_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let model = LgatModel::new(LgatConfig::tiny(), Vocab::build(["x"], 1), Variant::Full).map_err(err)?;
    let e = embedder();
    let mut rows = 0;
    for sp in screenplays(16, 30) {
        let g = build_graph(&sp, &e).map_err(err)?;
        for graph in [g.clone(), strip_characters(&g)] {
            let enc = model.encode_graph(&graph).map_err(err)?;
            for head in enc.attention.iter().flatten() {
                for i in 0..enc.neighborhoods.rows() {
                    let s: f64 = enc.neighborhoods.range(i).map(|k| head[k]).sum();
                    ensure((s - 1.0).abs() <= SUM_TOL, || format!("{}: GAT row {i} sums to {s}", sp.id))?;
                    rows += 1;
                }
            }
        }
    }
    let tape = Tape::new();
    for trial in 0..100 {
        let (r, c) = (rng.gen_range(1..8), rng.gen_range(1..8));
        let scale = [1.0, 10.0, 100.0][trial % 3];
        let x = tape.constant(random_tensor(&mut rng, r, c).map(|v| v * scale));
        let sq = tape.constant(random_tensor(&mut rng, r, r).map(|v| v * scale));
        let by_row = |v: &Tensor| (0..v.rows()).map(|i| v.row_slice(i).iter().sum::<f64>()).collect::<Vec<_>>();
        let outputs = [
            by_row(&x.softmax(1).map_err(err)?.to_tensor()),
            by_row(&x.softmax(0).map_err(err)?.to_tensor().transpose()),
            by_row(&x.softmax_rows(false).to_tensor()),
            by_row(&sq.softmax_rows(true).to_tensor()),
        ];
        for sums in outputs {
            ensure(sums.iter().all(|s| (s - 1.0).abs() <= SUM_TOL), || format!("softmax sums {sums:?}"))?;
            rows += sums.len();
        }
    }
    Ok(format!("{rows} rows"))
}

fn overfit_and_variants() -> Outcome {
    let start = Instant::now();
    let sp = parse_xml(heist::SCRIPT.as_bytes()).map_err(err)?;
    let mut config = LgatConfig::desk();
    ensure(config.architecture_dim == 128, || "desk dimension".into())?;
    config.epochs = 200;
    config.max_steps = Some(200);
    let embedder = config.embedder.build().map_err(err)?;
    let example = Example::new(&sp, heist::SUMMARY, embedder.as_ref(), config.graph).map_err(err)?;
    let (model, report) = train(std::slice::from_ref(&example), &config, Variant::Full, None).map_err(err)?;
    ensure(report.steps <= 200, || format!("{} steps", report.steps))?;
    let first = report.losses.iter().position(|&l| l < 0.05);
    ensure(first.is_some(), || format!("final loss {:?}", report.final_loss()))?;
    let decoded = model.summarize(&example.graph, &example.script).map_err(err)?;
    ensure(decoded == heist::SUMMARY, || format!("decoded {decoded:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let corpus: Vec<Example> = (0..5)
        .map(|i| {
            let sp = random_screenplay(&mut rng, &format!("pair{i}"), 4);
            let summary = words(&mut rng, 8..9);
            Example::new(&sp, &summary, embedder.as_ref(), config.graph)
        })
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let desk = LgatConfig::desk();
    let mut finished = Vec::new();
    for variant in Variant::ALL {
        let r = run_ablation(&corpus, variant, &desk, None).map_err(|e| format!("{variant}: {e}"))?;
        ensure(r.eval.is_well_formed() && r.train.losses.iter().all(|l| l.is_finite()), || {
            format!("{variant}: malformed report")
        })?;
        finished.push(variant.as_str());
    }
    within(start.elapsed(), Duration::from_secs(600))?;
    Ok(format!("loss < 0.05 at step {}, exact decode; variants {}", first.unwrap() + 1, finished.join(", ")))
}

fn scores(p: f64, r: f64) -> Scores {
    Scores::new(p, r)
}

fn metric_golden() -> Outcome {
    let golden: [(&str, &str, Scores, Scores, Scores); 10] = [
        ("the cat sat", "the cat ran", scores(2.0 / 3.0, 2.0 / 3.0), scores(0.5, 0.5), scores(2.0 / 3.0, 2.0 / 3.0)),
        ("a b c d", "a c b d", scores(1.0, 1.0), scores(0.0, 0.0), scores(0.75, 0.75)),
        ("the quick brown fox", "the quick brown fox", scores(1.0, 1.0), scores(1.0, 1.0), scores(1.0, 1.0)),
        ("a", "b c", scores(0.0, 0.0), scores(0.0, 0.0), scores(0.0, 0.0)),
        ("the the the", "the cat", scores(1.0 / 3.0, 0.5), scores(0.0, 0.0), scores(1.0 / 3.0, 0.5)),
        (
            "police arrest the thief",
            "the police arrest a thief",
            scores(1.0, 0.8),
            scores(1.0 / 3.0, 0.25),
            scores(0.75, 0.6),
        ),
        ("Hello, World!", "hello world", scores(1.0, 1.0), scores(1.0, 1.0), scores(1.0, 1.0)),
        ("", "anything here", scores(0.0, 0.0), scores(0.0, 0.0), scores(0.0, 0.0)),
        ("x y x y", "x y", scores(0.5, 1.0), scores(1.0 / 3.0, 1.0), scores(0.5, 1.0)),
        (
            "one two three four five",
            "five four three two one",
            scores(1.0, 1.0),
            scores(0.0, 0.0),
            scores(0.2, 0.2),
        ),
    ];
    let hand_f1 = [2.0 / 3.0, 8.0 / 9.0, 0.75, 2.0 / 3.0];
    ensure(
        close(
            &[golden[0].2.f1, golden[5].2.f1, golden[1].4.f1, golden[5].4.f1],
            &hand_f1,
            1e-15,
        ),
        || "F1 does not match the harmonic mean".into(),
    )?;
    for (cand, reference, r1, r2, rl) in &golden {
        for (name, got, want) in [
            ("rouge-1", rouge_n(cand, reference, 1), r1),
            ("rouge-2", rouge_n(cand, reference, 2), r2),
            ("rouge-l", rouge_l(cand, reference), rl),
        ] {
            ensure(got == *want, || format!("{name}({cand:?}, {reference:?}) = {got:?}, expected {want:?}"))?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..100 {
        let x = words(&mut rng, 1..20);
        let mut selves = vec![rouge_n(&x, &x, 1), rouge_l(&x, &x)];
        if x.contains(' ') {
            selves.push(rouge_n(&x, &x, 2));
        }
        ensure(selves.iter().all(|s| s.f1 == 1.0), || format!("self scores {selves:?} for {x:?}"))?;
    }
    for trial in 0..100 {
        let summary = words(&mut rng, 1..15);
        let script = words(&mut rng, 0..30);
        let extended = format!("{script} {}", words(&mut rng, 1..30));
        let (before, after) = (ngram_novelty(&summary, &script), ngram_novelty(&summary, &extended));
        for n in 1..=4 {
            ensure(after.percent(n) <= before.percent(n), || format!("trial {trial}: novelty rose for n={n}"))?;
        }
    }
    Ok("10 golden pairs, 100 self-score trials, 100 novelty trials".into())
}

fn shuffled(g: &CadGraph, rng: &mut ChaCha8Rng) -> CadGraph {
    let mut p = g.clone();
    p.scenes.shuffle(rng);
    p.dialogues.shuffle(rng);
    p.characters.shuffle(rng);
    p.edges.ss.shuffle(rng);
    p.edges.sd.shuffle(rng);
    p.edges.sc.shuffle(rng);
    p.edges.cd.shuffle(rng);
    p
}

fn permutation_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let model = LgatModel::new(LgatConfig::tiny(), Vocab::build(["x"], 1), Variant::Full).map_err(err)?;
    let e = embedder();
    let mut worst = 0.0f64;
    for sp in screenplays(20, 20) {
        let g = build_graph(&sp, &e).map_err(err)?;
        let base = model.encode_graph(&g).map_err(err)?.encoding;
        let other = model.encode_graph(&shuffled(&g, &mut rng)).map_err(err)?.encoding;
        let d = base.max_abs_diff(&other);
        ensure(d <= 1e-6, || format!("{}: difference {d}", sp.id))?;
        worst = worst.max(d);
    }
    Ok(format!("20 trials, max difference {worst:.1e}"))
}

fn two_blobs(rng: &mut ChaCha8Rng, per: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (label, center) in [(0, -5.0), (1, 5.0)] {
        for _ in 0..per {
            points.push((0..4).map(|_| center + rng.gen_range(-1.0..1.0)).collect());
            labels.push(label);
        }
    }
    (points, labels)
}

fn pca_kmeans() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for _ in 0..30 {
        let (n, d) = (rng.gen_range(3..40), rng.gen_range(3..12));
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let pca = if rng.gen_bool(0.5) { pca_3d(&points) } else { principal_components(&points, d) }.map_err(err)?;
        for (i, a) in pca.components.iter().enumerate() {
            for (j, b) in pca.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let dev = (dot - f64::from(u8::from(i == j))).abs();
                ensure(dev <= 1e-6, || format!("components {i},{j} dot {dot}"))?;
                worst = worst.max(dev);
            }
        }
    }
    for trial in 0..30 {
        let n = rng.gen_range(4..60);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let k = rng.gen_range(1..=4);
        let km = kmeans(&points, k, trial).map_err(err)?;
        ensure(km.inertia_trace.windows(2).all(|w| w[1] <= w[0]), || {
            format!("trial {trial}: inertia {:?}", km.inertia_trace)
        })?;
    }
    for seed in 0..10 {
        let (points, labels) = two_blobs(&mut rng, 15);
        let km = kmeans(&points, 2, seed).map_err(err)?;
        let flip = km.assignments[0] != labels[0];
        ensure(km.assignments.iter().zip(&labels).all(|(&a, &l)| (a != l) == flip), || {
            format!("seed {seed}: assignments {:?}", km.assignments)
        })?;
    }
    Ok(format!("30 PCA fits (orthonormal within {worst:.1e}), 30 K-Means traces, 10 blob seeds"))
}

fn pipeline_run(dir: &std::path::Path) -> Result<(String, Vec<u8>), String> {
    let path = dir.join("heist.xml");
    std::fs::write(&path, heist::SCRIPT).map_err(err)?;
    let sp = load_screenplay(&path, None).map_err(err)?;
    let mut config = LgatConfig::desk();
    config.epochs = 50;
    config.max_steps = Some(50);
    let embedder = config.embedder.build().map_err(err)?;
    let example = Example::new(&sp, heist::SUMMARY, embedder.as_ref(), config.graph).map_err(err)?;
    let ckpt = dir.join("ckpt");
    std::fs::create_dir_all(&ckpt).map_err(err)?;
    let (_, report) = train(std::slice::from_ref(&example), &config, Variant::Full, Some(&ckpt)).map_err(err)?;
    ensure(report.steps == 50, || format!("{} steps", report.steps))?;
    let summary = summarize_checkpoint(&ckpt, &sp, embedder.as_ref()).map_err(err)?;
    Ok((summary, std::fs::read(ckpt.join("loss.csv")).map_err(err)?))
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?);
    let (sa, la) = pipeline_run(a.path())?;
    let (sb, lb) = pipeline_run(b.path())?;
    ensure(sa == sb, || format!("summaries differ: {sa:?} vs {sb:?}"))?;
    ensure(la == lb, || "loss CSVs differ".into())?;
    Ok(format!("summary {} bytes, loss.csv {} bytes", sa.len(), la.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("graph construction oracle equivalence", graph_oracle),
        ("structural counts", structural_counts),
        ("character stripping structure", strip_structure),
        ("gradient fidelity", gradient_fidelity),
        ("attention normalization", attention_normalization),
        ("overfit oracle and variant training", overfit_and_variants),
        ("metric golden values", metric_golden),
        ("permutation invariance", permutation_invariance),
        ("PCA and K-Means", pca_kmeans),
        ("pipeline determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.2}s)"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name}: {detail} ({secs:.2}s)");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
