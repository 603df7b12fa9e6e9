#![allow(dead_code)]

pub mod heist;

use std::collections::BTreeSet;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use screengraph::graph::CadGraph;
use screengraph::screenplay::{Scene, Screenplay, ScriptElement};

pub const NAMES: [&str; 5] = ["ANNA", "BEN", "CLEO", "DMITRI", "EVE"];
const WORDS: [&str; 16] = [
    "door", "rain", "gun", "letter", "window", "car", "night", "train", "coffee", "money", "phone", "river", "key",
    "shadow", "dog", "map",
];

/// Between `count.start` and `count.end - 1` random words.
pub fn words(rng: &mut impl Rng, count: Range<usize>) -> String {
    let count = if count.is_empty() { 0 } else { rng.gen_range(count) };
    (0..count).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Random screenplay with at most `max_scenes` scenes, five characters and
/// twenty dialogue lines.
pub fn random_screenplay(rng: &mut impl Rng, id: &str, max_scenes: usize) -> Screenplay {
    let cast_size = rng.gen_range(0..=NAMES.len());
    let mut pool: Vec<&str> = NAMES.to_vec();
    pool.shuffle(rng);
    pool.truncate(cast_size);
    let mut budget = rng.gen_range(0..=20);
    let scene_count = rng.gen_range(1..=max_scenes);
    let mut scenes = Vec::with_capacity(scene_count);
    for index in 0..scene_count {
        let mut elements = Vec::new();
        let lines = if pool.is_empty() { 0 } else { rng.gen_range(0..=budget.min(4)) };
        budget -= lines;
        let mut description = Vec::new();
        for _ in 0..lines {
            if rng.gen_bool(0.4) {
                let text = words(rng, 2..6);
                description.push(text.clone());
                elements.push(ScriptElement::Action { text });
            }
            let speaker = pool.choose(rng).unwrap().to_string();
            elements.push(ScriptElement::Dialogue { speaker, text: words(rng, 1..8) });
        }
        if elements.is_empty() || rng.gen_bool(0.3) {
            let text = words(rng, 2..6);
            description.push(text.clone());
            elements.push(ScriptElement::Action { text });
        }
        let cast = pool.iter().filter(|_| rng.gen_bool(0.25)).map(|n| n.to_string()).collect();
        scenes.push(Scene {
            index,
            heading: format!("INT. ROOM {index} - DAY"),
            description: description.join(" "),
            cast,
            elements,
        });
    }
    Screenplay { id: id.into(), title: id.to_uppercase(), scenes }
}

/// Edge sets with characters named instead of numbered.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct NamedEdges {
    pub characters: BTreeSet<String>,
    pub ss: BTreeSet<(usize, usize)>,
    pub sd: BTreeSet<(usize, usize)>,
    pub sc: BTreeSet<(usize, String)>,
    pub cd: BTreeSet<(String, usize)>,
}

/// Enumerates the edges straight from their definitions: consecutive scenes,
/// each line to its scene, each character to every scene it speaks in or is
/// cast in, and each line to its speaker.
pub fn brute_force_edges(sp: &Screenplay) -> NamedEdges {
    let mut out = NamedEdges::default();
    let mut line = 0;
    for (s, scene) in sp.scenes.iter().enumerate() {
        for t in 0..sp.scenes.len() {
            if t == s + 1 {
                out.ss.insert((s, t));
            }
        }
        for name in &scene.cast {
            out.characters.insert(name.clone());
            out.sc.insert((s, name.clone()));
        }
        for element in &scene.elements {
            if let ScriptElement::Dialogue { speaker, .. } = element {
                out.characters.insert(speaker.clone());
                out.sd.insert((s, line));
                out.sc.insert((s, speaker.clone()));
                out.cd.insert((speaker.clone(), line));
                line += 1;
            }
        }
    }
    out
}

pub fn graph_edges(g: &CadGraph) -> NamedEdges {
    let name = |id: usize| g.character_name(id).expect("edge names a character node").to_string();
    NamedEdges {
        characters: g.characters.iter().map(|c| c.name.clone()).collect(),
        ss: g.edges.ss.iter().copied().collect(),
        sd: g.edges.sd.iter().copied().collect(),
        sc: g.edges.sc.iter().map(|&(s, c)| (s, name(c))).collect(),
        cd: g.edges.cd.iter().map(|&(c, d)| (name(c), d)).collect(),
    }
}

/// Every row-aligned value pair within `tol`.
pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}
