//! Screenplay model and the front ends that produce it.
//!
//! Two input forms are accepted: the canonical XML layout (see [`parse_xml`])
//! and loosely formatted plain text (see [`parse_plaintext`]). Both yield the
//! same [`Screenplay`] value, with speaker names normalized by
//! [`normalize_name`] so that character identity is stable across cues.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("screenplay contains no scenes")]
    EmptyScreenplay,
}

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: duplicate screenplay id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: missing or empty field {field:?}")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptElement {
    Dialogue { speaker: String, text: String },
    Action { text: String },
}

impl ScriptElement {
    pub fn text(&self) -> &str {
        match self {
            ScriptElement::Dialogue { text, .. } | ScriptElement::Action { text } => text,
        }
    }

    pub fn speaker(&self) -> Option<&str> {
        match self {
            ScriptElement::Dialogue { speaker, .. } => Some(speaker),
            ScriptElement::Action { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub index: usize,
    #[serde(default)]
    pub heading: String,
    /// Action text of the scene, joined with single spaces.
    #[serde(default)]
    pub description: String,
    /// Non-speaking characters listed on the scene (normalized names).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cast: Vec<String>,
    #[serde(default)]
    pub elements: Vec<ScriptElement>,
}

impl Scene {
    fn new(index: usize, heading: &str) -> Self {
        Scene {
            index,
            heading: collapse_whitespace(heading),
            description: String::new(),
            cast: Vec::new(),
            elements: Vec::new(),
        }
    }

    fn push_action(&mut self, text: &str) {
        let text = collapse_whitespace(text);
        if text.is_empty() {
            return;
        }
        if !self.description.is_empty() {
            self.description.push(' ');
        }
        self.description.push_str(&text);
        self.elements.push(ScriptElement::Action { text });
    }

    pub fn dialogues(&self) -> impl Iterator<Item = (&str, &str)> {
        self.elements.iter().filter_map(|e| match e {
            ScriptElement::Dialogue { speaker, text } => Some((speaker.as_str(), text.as_str())),
            ScriptElement::Action { .. } => None,
        })
    }

    /// Scene rendered as readable text: heading, then each element on its own line.
    pub fn full_text(&self) -> String {
        let mut out = String::new();
        if !self.heading.is_empty() {
            out.push_str(&self.heading);
        }
        for element in &self.elements {
            if !out.is_empty() {
                out.push('\n');
            }
            match element {
                ScriptElement::Action { text } => out.push_str(text),
                ScriptElement::Dialogue { speaker, text } => {
                    let _ = write!(out, "{speaker}: {text}");
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screenplay {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub scenes: Vec<Scene>,
}

impl Screenplay {
    /// Checks the structural invariants a deserialized screenplay must satisfy.
    pub fn validate(&self) -> Result<(), ParseError> {
        if self.scenes.is_empty() {
            return Err(ParseError::EmptyScreenplay);
        }
        for (i, scene) in self.scenes.iter().enumerate() {
            if scene.index != i {
                return Err(ParseError::SchemaViolation(format!(
                    "scene at position {i} has index {}",
                    scene.index
                )));
            }
            for element in &scene.elements {
                if let ScriptElement::Dialogue { speaker, text } = element {
                    if speaker.is_empty() || normalize_name(speaker) != *speaker {
                        return Err(ParseError::SchemaViolation(format!(
                            "scene {i}: speaker {speaker:?} is not a normalized name"
                        )));
                    }
                    if text.is_empty() {
                        return Err(ParseError::SchemaViolation(format!(
                            "scene {i}: empty dialogue by {speaker}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> CharacterRegistry {
        CharacterRegistry::from_screenplay(self)
    }

    pub fn dialogue_count(&self) -> usize {
        self.scenes.iter().map(|s| s.dialogues().count()).sum()
    }

    /// The whole script as plain text, scenes separated by blank lines.
    pub fn script_text(&self) -> String {
        self.scenes
            .iter()
            .map(Scene::full_text)
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Serializes to the canonical XML layout accepted by [`parse_xml`].
    pub fn to_xml(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<screenplay id=\"{}\" title=\"{}\">",
            escape_xml(&self.id),
            escape_xml(&self.title)
        );
        for scene in &self.scenes {
            let _ = write!(out, "  <scene heading=\"{}\"", escape_xml(&scene.heading));
            if !scene.cast.is_empty() {
                let _ = write!(out, " cast=\"{}\"", escape_xml(&scene.cast.join(";")));
            }
            out.push_str(">\n");
            for element in &scene.elements {
                match element {
                    ScriptElement::Action { text } => {
                        let _ = writeln!(out, "    <action>{}</action>", escape_xml(text));
                    }
                    ScriptElement::Dialogue { speaker, text } => {
                        let _ = writeln!(
                            out,
                            "    <dialogue speaker=\"{}\">{}</dialogue>",
                            escape_xml(speaker),
                            escape_xml(text)
                        );
                    }
                }
            }
            out.push_str("  </scene>\n");
        }
        out.push_str("</screenplay>\n");
        out
    }
}

/// Dense ids for normalized character names, assigned in order of first
/// appearance (cast lists are visited before the scene's dialogue).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct CharacterRegistry {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl From<Vec<String>> for CharacterRegistry {
    fn from(names: Vec<String>) -> Self {
        let mut registry = CharacterRegistry::default();
        for name in names {
            registry.intern(&name);
        }
        registry
    }
}

impl From<CharacterRegistry> for Vec<String> {
    fn from(registry: CharacterRegistry) -> Self {
        registry.names
    }
}

impl CharacterRegistry {
    pub fn from_screenplay(screenplay: &Screenplay) -> Self {
        let mut registry = CharacterRegistry::default();
        for scene in &screenplay.scenes {
            for name in &scene.cast {
                registry.intern(name);
            }
            for (speaker, _) in scene.dialogues() {
                registry.intern(speaker);
            }
        }
        registry
    }

    /// Returns the id for `raw`, registering its normalized form if new.
    /// Names that normalize to the empty string are not registered.
    pub fn intern(&mut self, raw: &str) -> Option<usize> {
        let name = normalize_name(raw);
        if name.is_empty() {
            return None;
        }
        if let Some(&id) = self.ids.get(&name) {
            return Some(id);
        }
        let id = self.names.len();
        self.ids.insert(name.clone(), id);
        self.names.push(name);
        Some(id)
    }

    pub fn id(&self, raw: &str) -> Option<usize> {
        self.ids.get(&normalize_name(raw)).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical character name: uppercased, whitespace collapsed, trailing
/// parentheticals such as `(V.O.)` or `(CONT'D)` removed.
pub fn normalize_name(raw: &str) -> String {
    let mut name = collapse_whitespace(&raw.to_uppercase());
    while name.ends_with(')') {
        match name.rfind('(') {
            Some(open) => {
                name.truncate(open);
                name = collapse_whitespace(&name);
            }
            None => break,
        }
    }
    name
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Parses a screenplay in the canonical XML layout:
///
/// ```xml
/// <screenplay id="..." title="...">
///   <scene heading="..." cast="A;B">
///     <action>...</action>
///     <dialogue speaker="...">...</dialogue>
///   </scene>
/// </screenplay>
/// ```
pub fn parse_xml(document: &[u8]) -> Result<Screenplay, ParseError> {
    let text = std::str::from_utf8(document)
        .map_err(|e| ParseError::MalformedXml(format!("invalid UTF-8: {e}")))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| ParseError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "screenplay" {
        return Err(ParseError::SchemaViolation(format!(
            "root element is <{}>, expected <screenplay>",
            root.tag_name().name()
        )));
    }
    let mut screenplay = Screenplay {
        id: root.attribute("id").unwrap_or_default().trim().to_string(),
        title: collapse_whitespace(root.attribute("title").unwrap_or_default()),
        scenes: Vec::new(),
    };
    for child in root.children() {
        if child.is_text() {
            reject_stray_text(child, "screenplay")?;
            continue;
        }
        if !child.is_element() {
            continue;
        }
        if child.tag_name().name() != "scene" {
            return Err(ParseError::SchemaViolation(format!(
                "unexpected <{}> inside <screenplay>",
                child.tag_name().name()
            )));
        }
        let mut scene = Scene::new(screenplay.scenes.len(), child.attribute("heading").unwrap_or_default());
        if let Some(cast) = child.attribute("cast") {
            for raw in cast.split(';') {
                let name = normalize_name(raw);
                if !name.is_empty() && !scene.cast.contains(&name) {
                    scene.cast.push(name);
                }
            }
        }
        for item in child.children() {
            if item.is_text() {
                reject_stray_text(item, "scene")?;
                continue;
            }
            if !item.is_element() {
                continue;
            }
            let body = element_text(item)?;
            match item.tag_name().name() {
                "action" => scene.push_action(&body),
                "dialogue" => {
                    let speaker = item.attribute("speaker").map(normalize_name).unwrap_or_default();
                    if speaker.is_empty() {
                        return Err(ParseError::SchemaViolation(format!(
                            "scene {}: <dialogue> without a speaker",
                            scene.index
                        )));
                    }
                    let text = collapse_whitespace(&body);
                    if text.is_empty() {
                        return Err(ParseError::SchemaViolation(format!(
                            "scene {}: empty <dialogue> by {speaker}",
                            scene.index
                        )));
                    }
                    scene.elements.push(ScriptElement::Dialogue { speaker, text });
                }
                other => {
                    return Err(ParseError::SchemaViolation(format!("unexpected <{other}> inside <scene>")));
                }
            }
        }
        screenplay.scenes.push(scene);
    }
    if screenplay.scenes.is_empty() {
        return Err(ParseError::EmptyScreenplay);
    }
    Ok(screenplay)
}

fn reject_stray_text(node: roxmltree::Node, parent: &str) -> Result<(), ParseError> {
    match node.text() {
        Some(t) if !t.trim().is_empty() => Err(ParseError::SchemaViolation(format!(
            "stray text {:?} inside <{parent}>",
            t.trim()
        ))),
        _ => Ok(()),
    }
}

fn element_text(node: roxmltree::Node) -> Result<String, ParseError> {
    let mut body = String::new();
    for part in node.children() {
        if part.is_element() {
            return Err(ParseError::SchemaViolation(format!(
                "unexpected <{}> inside <{}>",
                part.tag_name().name(),
                node.tag_name().name()
            )));
        }
        if let Some(t) = part.text() {
            body.push_str(t);
        }
    }
    Ok(body)
}

const HEADING_PREFIXES: [&str; 6] = ["INT.", "EXT.", "INT/EXT", "EXT/INT", "I/E", "INT "];
const MAX_CUE_CHARS: usize = 40;
const MAX_CUE_WORDS: usize = 4;

fn is_all_caps(line: &str) -> bool {
    line.chars().any(char::is_alphabetic) && !line.chars().any(char::is_lowercase)
}

fn is_transition(line: &str) -> bool {
    is_all_caps(line) && line.ends_with(':')
}

fn is_cue(line: &str) -> bool {
    let name = normalize_name(line);
    is_all_caps(line)
        && line.chars().next().is_some_and(char::is_alphabetic)
        && !name.is_empty()
        && name.chars().count() <= MAX_CUE_CHARS
        && name.split(' ').count() <= MAX_CUE_WORDS
}

fn is_parenthetical(line: &str) -> bool {
    line.starts_with('(') && line.ends_with(')')
}

/// Heuristic parser for plain-text scripts.
///
/// Rules, applied line by line on trimmed text:
/// * a line starting with `INT.`, `EXT.`, `INT/EXT`, `I/E` (any case), or an
///   all-caps line followed by a blank line (or end of input), opens a scene;
/// * an all-caps line ending in `:` is a transition and is dropped;
/// * a short all-caps line (at most 4 words, 40 chars) directly followed by
///   text is a speaker cue; the following non-blank lines up to the next
///   blank line are that speaker's dialogue, with `(...)` lines dropped;
/// * any other run of non-blank lines is one action element.
///
/// Content before the first heading goes to a synthetic scene 0 with an
/// empty heading.
pub fn parse_plaintext(document: &str) -> Result<Screenplay, ParseError> {
    let lines: Vec<&str> = document.lines().map(str::trim).collect();
    let blank_at = |i: usize| lines.get(i).is_none_or(|l| l.is_empty());

    let mut scenes: Vec<Scene> = Vec::new();
    let mut current = Scene::new(0, "");
    let mut seen_heading = false;
    let mut action = String::new();

    let flush_action = |scene: &mut Scene, action: &mut String| {
        if !action.is_empty() {
            scene.push_action(action);
            action.clear();
        }
    };

    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if line.is_empty() {
            flush_action(&mut current, &mut action);
            i += 1;
            continue;
        }
        let upper = line.to_uppercase();
        let prefixed = HEADING_PREFIXES.iter().any(|p| upper.starts_with(p));
        if prefixed || (is_all_caps(line) && !is_transition(line) && blank_at(i + 1)) {
            flush_action(&mut current, &mut action);
            let finished = std::mem::replace(&mut current, Scene::new(0, line));
            if seen_heading || !finished.elements.is_empty() {
                scenes.push(finished);
            }
            seen_heading = true;
            i += 1;
            continue;
        }
        if is_transition(line) {
            flush_action(&mut current, &mut action);
            i += 1;
            continue;
        }
        if is_cue(line) && !blank_at(i + 1) {
            let mut j = i + 1;
            let mut speech = Vec::new();
            while j < lines.len() && !lines[j].is_empty() {
                let upper = lines[j].to_uppercase();
                if HEADING_PREFIXES.iter().any(|p| upper.starts_with(p)) {
                    break;
                }
                if !is_parenthetical(lines[j]) {
                    speech.push(lines[j]);
                }
                j += 1;
            }
            let text = collapse_whitespace(&speech.join(" "));
            if !text.is_empty() {
                flush_action(&mut current, &mut action);
                current.elements.push(ScriptElement::Dialogue {
                    speaker: normalize_name(line),
                    text,
                });
                i = j;
                continue;
            }
        }
        if !action.is_empty() {
            action.push(' ');
        }
        action.push_str(line);
        i += 1;
    }
    flush_action(&mut current, &mut action);
    if seen_heading || !current.elements.is_empty() {
        scenes.push(current);
    }
    if scenes.is_empty() {
        return Err(ParseError::EmptyScreenplay);
    }
    for (index, scene) in scenes.iter_mut().enumerate() {
        scene.index = index;
    }
    Ok(Screenplay {
        id: String::new(),
        title: String::new(),
        scenes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummarySource {
    Imdb,
    Wikipedia,
    Other,
}

impl SummarySource {
    fn parse(s: &str) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "imdb" => SummarySource::Imdb,
            "wikipedia" | "wiki" => SummarySource::Wikipedia,
            _ => SummarySource::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub id: String,
    pub text: String,
    pub source: SummarySource,
}

/// Reads line-delimited JSON records `{"id", "text", "source"}`.
/// `source` is optional and defaults to `other`.
pub fn load_summaries(path: impl AsRef<Path>) -> Result<BTreeMap<String, ReferenceSummary>, SummaryError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| SummaryError::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_summaries(&content)
}

pub fn parse_summaries(content: &str) -> Result<BTreeMap<String, ReferenceSummary>, SummaryError> {
    let mut out = BTreeMap::new();
    for (n, raw) in content.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| SummaryError::MalformedRecord {
            line,
            message: e.to_string(),
        })?;
        let field = |name: &'static str| {
            value
                .get(name)
                .and_then(serde_json::Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or(SummaryError::MissingField { line, field: name })
        };
        let id = field("id")?.to_string();
        let text = field("text")?.to_string();
        let source = value
            .get("source")
            .and_then(serde_json::Value::as_str)
            .map_or(SummarySource::Other, SummarySource::parse);
        if out.contains_key(&id) {
            return Err(SummaryError::DuplicateId { line, id });
        }
        out.insert(id.clone(), ReferenceSummary { id, text, source });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_xml() {
        let sp = parse_xml(br#"<screenplay id="m" title="T"><scene heading="INT. ROOM"/></screenplay>"#).unwrap();
        assert_eq!(sp.scenes.len(), 1);
        assert_eq!(sp.scenes[0].index, 0);
        assert!(sp.scenes[0].elements.is_empty());
        assert_eq!(sp.scenes[0].heading, "INT. ROOM");
    }

    #[test]
    fn speaker_variants_share_one_id() {
        let doc = r#"<screenplay id="x">
            <scene><dialogue speaker="JOE">Hi.</dialogue></scene>
            <scene><dialogue speaker="Joe ">Hello   there.</dialogue></scene>
            <scene><action>  Rain   falls. </action></scene>
        </screenplay>"#;
        let sp = parse_xml(doc.as_bytes()).unwrap();
        assert_eq!(sp.scenes.len(), 3);
        let registry = sp.registry();
        assert_eq!(registry.len(), 1);
        assert_eq!(registry.id("joe"), Some(0));
        assert_eq!(sp.scenes[1].elements[0].text(), "Hello there.");
        assert_eq!(sp.scenes[2].description, "Rain falls.");
    }

    #[test]
    fn xml_errors() {
        assert!(matches!(
            parse_xml(br#"<screenplay><scene><dialogue>Hi</dialogue></scene></screenplay>"#),
            Err(ParseError::SchemaViolation(_))
        ));
        assert!(matches!(
            parse_xml(br#"<screenplay><scene><song>la</song></scene></screenplay>"#),
            Err(ParseError::SchemaViolation(_))
        ));
        assert!(matches!(parse_xml(b"<screenplay><scene>"), Err(ParseError::MalformedXml(_))));
        assert_eq!(parse_xml(b"<screenplay id=\"a\"/>"), Err(ParseError::EmptyScreenplay));
        assert!(matches!(
            parse_xml(br#"<screenplay><scene><dialogue speaker="(V.O.)">x</dialogue></scene></screenplay>"#),
            Err(ParseError::SchemaViolation(_))
        ));
    }

    #[test]
    fn cast_attribute_registers_silent_characters() {
        let sp = parse_xml(
            br#"<screenplay><scene cast="mary; Joe (O.S.)"><dialogue speaker="JOE">Go.</dialogue></scene></screenplay>"#,
        )
        .unwrap();
        assert_eq!(sp.scenes[0].cast, vec!["MARY", "JOE"]);
        assert_eq!(sp.registry().names(), ["MARY", "JOE"]);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_name("Joe (V.O.)"), "JOE");
        assert_eq!(normalize_name("JOE"), "JOE");
        assert_eq!(normalize_name("  mary   jane "), "MARY JANE");
        assert_eq!(normalize_name("joe (cont'd) (o.s.)"), "JOE");
        assert_eq!(normalize_name("(V.O.)"), "");
    }

    #[test]
    fn plaintext_heading_and_cue() {
        let sp = parse_plaintext("INT. HOUSE\nJOE\nHello.").unwrap();
        assert_eq!(sp.scenes.len(), 1);
        assert_eq!(sp.scenes[0].heading, "INT. HOUSE");
        assert_eq!(
            sp.scenes[0].elements,
            vec![ScriptElement::Dialogue {
                speaker: "JOE".into(),
                text: "Hello.".into()
            }]
        );
    }

    #[test]
    fn plaintext_without_structure_is_one_scene() {
        let text = "The sun rises over the hills.\nA dog barks.\n\nWind moves the grass.";
        let sp = parse_plaintext(text).unwrap();
        assert_eq!(sp.scenes.len(), 1);
        assert_eq!(sp.scenes[0].heading, "");
        assert_eq!(sp.scenes[0].description, collapse_whitespace(text));
        assert!(sp.scenes[0].dialogues().next().is_none());
    }

    #[test]
    fn plaintext_prelude_and_transitions() {
        let text = "A cold open.\n\nEXT. FIELD - DAY\n\nMARY (V.O.)\n(quietly)\nWe made it.\n\nCUT TO:\n\nINT. BARN\nMary walks in.\n";
        let sp = parse_plaintext(text).unwrap();
        assert_eq!(sp.scenes.len(), 3);
        assert_eq!(sp.scenes[0].description, "A cold open.");
        assert_eq!(sp.scenes[1].heading, "EXT. FIELD - DAY");
        assert_eq!(sp.scenes[1].dialogues().collect::<Vec<_>>(), vec![("MARY", "We made it.")]);
        assert_eq!(sp.scenes[2].description, "Mary walks in.");
        assert_eq!(sp.scenes.iter().map(|s| s.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn plaintext_empty() {
        assert_eq!(parse_plaintext(""), Err(ParseError::EmptyScreenplay));
        assert_eq!(parse_plaintext(" \n\n  "), Err(ParseError::EmptyScreenplay));
    }

    #[test]
    fn summaries() {
        let ok = "{\"id\":\"a\",\"text\":\"x\",\"source\":\"imdb\"}\n{\"id\":\"b\",\"text\":\"y\",\"source\":\"wikipedia\"}\n";
        let map = parse_summaries(ok).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map["b"].source, SummarySource::Wikipedia);

        let dup = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(parse_summaries(dup), Err(SummaryError::DuplicateId { line: 2, .. })));

        let missing = "{\"id\":\"a\",\"source\":\"imdb\"}\n";
        assert!(matches!(
            parse_summaries(missing),
            Err(SummaryError::MissingField { field: "text", .. })
        ));
        assert!(matches!(
            load_summaries("/nonexistent/summaries.jsonl"),
            Err(SummaryError::UnreadableFile { .. })
        ));
    }
}
