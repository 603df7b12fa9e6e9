//! Loading screenplays and (screenplay, summary) corpora from disk.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::embed::EmbedError;
use crate::lgat::{Example, LgatConfig, LgatError};
use crate::screenplay::{load_summaries, parse_plaintext, parse_xml, ParseError, Screenplay, SummaryError};

pub const SUMMARIES_FILE: &str = "summaries.jsonl";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Unreadable { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: invalid screenplay JSON: {message}")]
    Json { path: PathBuf, message: String },
    #[error(transparent)]
    Summaries(#[from] SummaryError),
    #[error("screenplay {0:?} has no reference summary")]
    MissingSummary(String),
    #[error("screenplay id {0:?} appears in more than one file")]
    DuplicateScreenplay(String),
    #[error("no screenplays found in {0}")]
    Empty(PathBuf),
    #[error("unknown script format {0:?}")]
    UnknownFormat(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Lgat(#[from] LgatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptFormat {
    Xml,
    Text,
    Json,
}

impl FromStr for ScriptFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "xml" => Ok(ScriptFormat::Xml),
            "txt" | "text" | "fountain" => Ok(ScriptFormat::Text),
            "json" => Ok(ScriptFormat::Json),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

impl ScriptFormat {
    /// Format implied by a file extension; `None` for unrecognized ones.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension().and_then(|e| e.to_str()).and_then(|e| e.parse().ok())
    }
}

/// Reads one screenplay. Without an explicit format the extension decides,
/// falling back to the plain-text parser. A missing id is filled from the
/// file stem.
pub fn load_screenplay(path: &Path, format: Option<ScriptFormat>) -> Result<Screenplay, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Unreadable { path: path.to_path_buf(), source })?;
    let format = format.or_else(|| ScriptFormat::from_path(path)).unwrap_or(ScriptFormat::Text);
    let parse_err = |source| CorpusError::Parse { path: path.to_path_buf(), source };
    let mut screenplay = match format {
        ScriptFormat::Xml => parse_xml(&bytes).map_err(parse_err)?,
        ScriptFormat::Text => parse_plaintext(&String::from_utf8_lossy(&bytes)).map_err(parse_err)?,
        ScriptFormat::Json => {
            let sp: Screenplay = serde_json::from_slice(&bytes)
                .map_err(|e| CorpusError::Json { path: path.to_path_buf(), message: e.to_string() })?;
            sp.validate().map_err(parse_err)?;
            sp
        }
    };
    if screenplay.id.is_empty() {
        screenplay.id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(screenplay)
}

/// Screenplays in `dir` (`.xml`, `.txt`, `.fountain`, `.json`) paired with
/// the summaries in `summaries` (default `dir/summaries.jsonl`), sorted by id.
pub fn load_corpus(dir: &Path, summaries: Option<&Path>) -> Result<Vec<(Screenplay, String)>, CorpusError> {
    let summary_path = summaries.map_or_else(|| dir.join(SUMMARIES_FILE), Path::to_path_buf);
    let refs = load_summaries(&summary_path)?;
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Unreadable { path: dir.to_path_buf(), source })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p != &summary_path && ScriptFormat::from_path(p).is_some())
        .collect();
    files.sort();
    let mut pairs: Vec<(Screenplay, String)> = Vec::with_capacity(files.len());
    for path in files {
        let sp = load_screenplay(&path, None)?;
        if pairs.iter().any(|(other, _)| other.id == sp.id) {
            return Err(CorpusError::DuplicateScreenplay(sp.id));
        }
        let summary = refs.get(&sp.id).ok_or_else(|| CorpusError::MissingSummary(sp.id.clone()))?;
        let text = summary.text.clone();
        pairs.push((sp, text));
    }
    if pairs.is_empty() {
        return Err(CorpusError::Empty(dir.to_path_buf()));
    }
    pairs.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    Ok(pairs)
}

/// Builds graphs for every pair with the configured embedder and graph options.
pub fn build_examples(pairs: &[(Screenplay, String)], config: &LgatConfig) -> Result<Vec<Example>, CorpusError> {
    let embedder = config.embedder.build()?;
    pairs
        .iter()
        .map(|(sp, summary)| Ok(Example::new(sp, summary, embedder.as_ref(), config.graph)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_pairs_by_id() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.xml"), r#"<screenplay id="b"><scene><action>Hi.</action></scene></screenplay>"#)
            .unwrap();
        fs::write(dir.path().join("a.txt"), "INT. HOUSE\n\nJOE\nHello.\n").unwrap();
        fs::write(
            dir.path().join(SUMMARIES_FILE),
            "{\"id\":\"a\",\"text\":\"Joe greets.\"}\n{\"id\":\"b\",\"text\":\"Someone says hi.\"}\n",
        )
        .unwrap();
        let pairs = load_corpus(dir.path(), None).unwrap();
        assert_eq!(pairs.iter().map(|(s, _)| s.id.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(pairs[0].1, "Joe greets.");

        fs::write(dir.path().join("c.xml"), r#"<screenplay id="c"><scene/></screenplay>"#).unwrap();
        assert!(matches!(load_corpus(dir.path(), None), Err(CorpusError::MissingSummary(id)) if id == "c"));
    }
}
