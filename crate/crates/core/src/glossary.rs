//! Glossary snapshot ingestion and definition normalization.
//!
//! A snapshot is read as-is ([`parse_glossary`]), then reduced to first
//! sentences ([`normalize`]) and finally has its `See <Term>` entries
//! replaced ([`resolve_cross_references`]). [`Glossary::stage`] records how far
//! an instance has been taken, and every entry keeps its raw definition.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GlossaryError {
    #[error("record {index}: missing or non-text field `{field}`")]
    MissingField { index: usize, field: &'static str },
    #[error("record {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("duplicate term `{term}`")]
    DuplicateTerm { term: String },
    #[error("empty input")]
    EmptyInput,
    #[error("`{term}` cites `{cited}`, which is not in the glossary")]
    UnresolvedReference { term: String, cited: String },
    #[error("cross-reference cycle: {}", .cycle.join(" -> "))]
    ReferenceCycle { cycle: Vec<String> },
    #[error("cannot determine snapshot format of `{0}` (expected .jsonl, .csv or .tsv)")]
    UnknownFormat(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, GlossaryError>;

/// How a `See <Term>` definition is rewritten.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossRefMode {
    /// Substitute the cited term's (transitively resolved) definition.
    #[default]
    Definition,
    /// Substitute the cited term's name.
    TermName,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// `normalized_definition` still equals `raw_definition`.
    #[default]
    Parsed,
    FirstSentence,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlossaryEntry {
    pub term: String,
    pub raw_definition: String,
    pub normalized_definition: String,
    #[serde(default)]
    pub cross_refs_resolved: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Glossary {
    pub source_id: String,
    pub stage: Stage,
    pub entries: Vec<GlossaryEntry>,
}

impl Glossary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.term.as_str())
    }

    pub fn get(&self, term: &str) -> Option<&GlossaryEntry> {
        let key = term_key(term);
        self.entries
            .iter()
            .find(|e| e.term == term)
            .or_else(|| self.entries.iter().find(|e| term_key(&e.term) == key))
    }
}

/// Uniqueness key: parenthesized acronyms removed, lowercased, whitespace
/// collapsed. `East Asian monsoon (EAsiaM)` and `east asian monsoon` collide;
/// a lowercase qualifier such as `Pathways (climate)` is kept.
pub fn term_key(term: &str) -> String {
    let mut kept = String::with_capacity(term.len());
    let mut rest = term;
    while let Some(open) = rest.find('(') {
        let Some(close) = rest[open..].find(')').map(|c| open + c) else { break };
        let inner = &rest[open + 1..close];
        let acronym = !inner.is_empty()
            && !inner.chars().any(char::is_whitespace)
            && inner.chars().any(char::is_uppercase);
        kept.push_str(&rest[..open]);
        if !acronym {
            kept.push_str(&rest[open..=close]);
        }
        rest = &rest[close + 1..];
    }
    kept.push_str(rest);
    kept.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    /// One JSON object per line with `term` and `definition`.
    JsonLines,
    /// Header row containing `term` and `definition`.
    Csv,
    Tsv,
}

impl SnapshotFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("jsonl" | "ndjson") => Ok(Self::JsonLines),
            Some("csv") => Ok(Self::Csv),
            Some("tsv") => Ok(Self::Tsv),
            _ => Err(GlossaryError::UnknownFormat(path.display().to_string())),
        }
    }
}

/// Reads a snapshot file, picking the format from its extension. The file
/// name becomes the glossary's `source_id`.
pub fn load_snapshot(path: &Path) -> Result<Glossary> {
    let format = SnapshotFormat::from_path(path)?;
    let input = read_to_string(path)?;
    let source_id = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    parse_glossary(&input, format, &source_id)
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GlossaryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Parses snapshot records into a [`Stage::Parsed`] glossary. Record indices
/// in errors are zero-based and count records, not lines.
pub fn parse_glossary(input: &str, format: SnapshotFormat, source_id: &str) -> Result<Glossary> {
    let records = match format {
        SnapshotFormat::JsonLines => json_records(input)?,
        SnapshotFormat::Csv => delimited_records(input, b',')?,
        SnapshotFormat::Tsv => delimited_records(input, b'\t')?,
    };

    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(records.len());
    for (index, (term, definition)) in records.into_iter().enumerate() {
        let term = term.trim().to_string();
        if term.is_empty() {
            return Err(GlossaryError::Malformed { index, reason: "empty term".into() });
        }
        if definition.trim().is_empty() {
            return Err(GlossaryError::Malformed { index, reason: format!("empty definition for `{term}`") });
        }
        if !seen.insert(term_key(&term)) {
            return Err(GlossaryError::DuplicateTerm { term });
        }
        entries.push(GlossaryEntry {
            term,
            normalized_definition: definition.clone(),
            raw_definition: definition,
            cross_refs_resolved: Vec::new(),
        });
    }

    Ok(Glossary { source_id: source_id.to_string(), stage: Stage::Parsed, entries })
}

fn json_records(input: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in input.lines().filter(|l| !l.trim().is_empty()) {
        let index = out.len();
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| GlossaryError::Malformed { index, reason: e.to_string() })?;
        let field = |name: &'static str| {
            value
                .get(name)
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .ok_or(GlossaryError::MissingField { index, field: name })
        };
        out.push((field("term")?, field("definition")?));
    }
    Ok(out)
}

fn delimited_records(input: &str, delimiter: u8) -> Result<Vec<(String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(input.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| GlossaryError::Malformed { index: 0, reason: e.to_string() })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (term_col, def_col) = (column("term"), column("definition"));

    let mut out = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| GlossaryError::Malformed { index, reason: e.to_string() })?;
        let get = |col: Option<usize>, field: &'static str| {
            col.and_then(|c| record.get(c))
                .map(str::to_string)
                .ok_or(GlossaryError::MissingField { index, field })
        };
        out.push((get(term_col, "term")?, get(def_col, "definition")?));
    }
    Ok(out)
}

/// The prefix of `text` through its first sentence terminator, trimmed. Text
/// without a terminator is returned whole.
pub fn first_sentence(text: &str) -> Result<String> {
    text::split_sentences(text)
        .first()
        .map(|s| s.to_string())
        .ok_or(GlossaryError::EmptyInput)
}

/// Reduces every definition to its first sentence.
pub fn normalize(mut g: Glossary) -> Result<Glossary> {
    for e in &mut g.entries {
        e.normalized_definition = first_sentence(&e.normalized_definition)?;
    }
    if g.stage == Stage::Parsed {
        g.stage = Stage::FirstSentence;
    }
    Ok(g)
}

/// Returns the cited term if `definition` is a bare `See [also] <Term>[.]`.
pub fn cross_reference_target(definition: &str) -> Option<&str> {
    let d = definition.trim();
    let d = d.strip_suffix('.').unwrap_or(d).trim_end();
    let rest = strip_prefix_ci(d, "see also ").or_else(|| strip_prefix_ci(d, "see "))?;
    let cited = rest.trim();
    (!cited.is_empty()).then_some(cited)
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &s[prefix.len()..])
}

/// Replaces cross-reference definitions, following chains transitively.
/// Idempotent: resolved definitions no longer match the pattern.
pub fn resolve_cross_references(g: Glossary, mode: CrossRefMode) -> Result<Glossary> {
    let mut exact: HashMap<&str, usize> = HashMap::new();
    let mut by_key: HashMap<String, usize> = HashMap::new();
    for (i, e) in g.entries.iter().enumerate() {
        exact.insert(e.term.as_str(), i);
        by_key.insert(term_key(&e.term), i);
    }
    let lookup = |name: &str| exact.get(name).copied().or_else(|| by_key.get(&term_key(name)).copied());

    let mut replacements = Vec::new();
    for (i, entry) in g.entries.iter().enumerate() {
        let Some(first_cited) = cross_reference_target(&entry.normalized_definition) else {
            continue;
        };
        let mut visited = vec![i];
        let mut chain = Vec::new();
        let mut citing = i;
        let mut cited = first_cited;
        let resolved = loop {
            let Some(j) = lookup(cited) else {
                return Err(GlossaryError::UnresolvedReference {
                    term: g.entries[citing].term.clone(),
                    cited: cited.to_string(),
                });
            };
            if let Some(pos) = visited.iter().position(|&v| v == j) {
                let mut cycle: Vec<String> = visited[pos..].iter().map(|&v| g.entries[v].term.clone()).collect();
                cycle.push(g.entries[j].term.clone());
                return Err(GlossaryError::ReferenceCycle { cycle });
            }
            chain.push(g.entries[j].term.clone());
            match cross_reference_target(&g.entries[j].normalized_definition) {
                Some(next) => {
                    visited.push(j);
                    citing = j;
                    cited = next;
                }
                None => break g.entries[j].normalized_definition.clone(),
            }
        };
        let (text, recorded) = match mode {
            CrossRefMode::Definition => (resolved, chain),
            CrossRefMode::TermName => (chain[0].clone(), vec![chain[0].clone()]),
        };
        replacements.push((i, text, recorded));
    }

    let mut g = g;
    for (i, text, recorded) in replacements {
        let e = &mut g.entries[i];
        e.normalized_definition = text;
        e.cross_refs_resolved.extend(recorded);
    }
    g.stage = Stage::Resolved;
    Ok(g)
}

/// Keeps the named terms in keep-list order. Names not found come back in
/// the second element instead of failing.
pub fn select_subset(g: &Glossary, keep: &[String]) -> (Glossary, Vec<String>) {
    let mut missing = Vec::new();
    let mut taken = HashSet::new();
    let mut entries = Vec::new();
    for name in keep {
        let key = term_key(name);
        let found = g
            .entries
            .iter()
            .position(|e| e.term == *name)
            .or_else(|| g.entries.iter().position(|e| term_key(&e.term) == key));
        match found {
            Some(i) if taken.insert(i) => entries.push(g.entries[i].clone()),
            Some(_) => {}
            None => missing.push(name.clone()),
        }
    }
    (Glossary { source_id: g.source_id.clone(), stage: g.stage, entries }, missing)
}

/// Keep-list file: one term per line, `#` starts a comment line.
pub fn parse_keep_list(input: &str) -> Vec<String> {
    input
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn load_keep_list(path: &Path) -> Result<Vec<String>> {
    Ok(parse_keep_list(&read_to_string(path)?))
}

/// Serializes a glossary as JSON lines, one entry per line, preceded by a
/// header line carrying `source_id` and `stage`.
pub fn to_jsonl(g: &Glossary) -> String {
    let header = serde_json::json!({ "source_id": g.source_id, "stage": g.stage });
    let mut out = header.to_string();
    out.push('\n');
    for e in &g.entries {
        out.push_str(&serde_json::to_string(e).expect("entry serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(input: &str) -> Result<Glossary> {
    let mut lines = input.lines().filter(|l| !l.trim().is_empty());
    #[derive(Deserialize)]
    struct Header {
        source_id: String,
        stage: Stage,
    }
    let header: Header = serde_json::from_str(lines.next().ok_or(GlossaryError::EmptyInput)?)
        .map_err(|e| GlossaryError::Malformed { index: 0, reason: e.to_string() })?;
    let entries = lines
        .enumerate()
        .map(|(index, l)| {
            serde_json::from_str(l).map_err(|e| GlossaryError::Malformed { index, reason: e.to_string() })
        })
        .collect::<Result<Vec<GlossaryEntry>>>()?;
    Ok(Glossary { source_id: header.source_id, stage: header.stage, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn glossary(pairs: &[(&str, &str)]) -> Glossary {
        let input: String = pairs
            .iter()
            .map(|(t, d)| serde_json::json!({"term": t, "definition": d}).to_string() + "\n")
            .collect();
        normalize(parse_glossary(&input, SnapshotFormat::JsonLines, "test").unwrap()).unwrap()
    }

    #[test]
    fn three_records() {
        let g = glossary(&[("A", "x."), ("B", "y."), ("C", "z.")]);
        assert_eq!(g.terms().collect::<Vec<_>>(), vec!["A", "B", "C"]);
    }

    #[test]
    fn parse_keeps_raw_and_defers_normalization() {
        let input = r#"{"term":"A","definition":"One. Two."}"#;
        let g = parse_glossary(input, SnapshotFormat::JsonLines, "s").unwrap();
        assert_eq!(g.stage, Stage::Parsed);
        assert_eq!(g.entries[0].normalized_definition, "One. Two.");
        let g = normalize(g).unwrap();
        assert_eq!(g.stage, Stage::FirstSentence);
        assert_eq!(g.entries[0].raw_definition, "One. Two.");
        assert_eq!(g.entries[0].normalized_definition, "One.");
    }

    #[test]
    fn duplicate_term_rejected() {
        let input = "{\"term\":\"Leakage\",\"definition\":\"a.\"}\n{\"term\":\"leakage\",\"definition\":\"b.\"}";
        assert_eq!(
            parse_glossary(input, SnapshotFormat::JsonLines, "s"),
            Err(GlossaryError::DuplicateTerm { term: "leakage".into() })
        );
    }

    #[test]
    fn key_strips_only_acronyms() {
        assert_eq!(term_key("East Asian monsoon (EAsiaM)"), "east asian monsoon");
        assert_eq!(term_key("REDD+ (REDD+)  plus"), "redd+ plus");
        assert_eq!(term_key("Pathways (climate)"), "pathways (climate)");
        assert_ne!(term_key("Pathways (climate)"), term_key("Pathways"));
    }

    #[test]
    fn duplicate_ignores_acronym() {
        let input = "term,definition\nEast Asian monsoon (EAsiaM),a.\nEast Asian Monsoon,b.\n";
        assert!(matches!(
            parse_glossary(input, SnapshotFormat::Csv, "s"),
            Err(GlossaryError::DuplicateTerm { .. })
        ));
    }

    #[test]
    fn missing_field_names_record() {
        let input = "{\"term\":\"A\",\"definition\":\"a.\"}\n{\"term\":\"B\"}";
        assert_eq!(
            parse_glossary(input, SnapshotFormat::JsonLines, "s"),
            Err(GlossaryError::MissingField { index: 1, field: "definition" })
        );
        let tsv = "term\tnotes\nA\tx\n";
        assert_eq!(
            parse_glossary(tsv, SnapshotFormat::Tsv, "s"),
            Err(GlossaryError::MissingField { index: 0, field: "definition" })
        );
    }

    #[test]
    fn csv_with_quoted_commas() {
        let input = "term,definition\n\"Forest\",\"Land, with trees. More.\"\n";
        let g = parse_glossary(input, SnapshotFormat::Csv, "s").unwrap();
        assert_eq!(g.entries[0].raw_definition, "Land, with trees. More.");
    }

    #[test]
    fn first_sentence_examples() {
        assert_eq!(first_sentence("A pathway. It has stages.").unwrap(), "A pathway.");
        assert_eq!(
            first_sentence("Flux (expressed in W m–2) due to CO2. More text.").unwrap(),
            "Flux (expressed in W m–2) due to CO2."
        );
        assert_eq!(first_sentence("No terminator here").unwrap(), "No terminator here");
        assert_eq!(first_sentence(""), Err(GlossaryError::EmptyInput));
    }

    #[test]
    fn direct_cross_reference() {
        let g = glossary(&[("Pathways", "A trajectory of change."), ("Pathways (climate)", "See Pathways.")]);
        let g = resolve_cross_references(g, CrossRefMode::Definition).unwrap();
        let e = &g.entries[1];
        assert_eq!(e.normalized_definition, "A trajectory of change.");
        assert_eq!(e.cross_refs_resolved, vec!["Pathways"]);
        assert_eq!(e.raw_definition, "See Pathways.");
    }

    #[test]
    fn term_name_mode() {
        let g = glossary(&[("Pathways", "A trajectory of change."), ("Route", "see also pathways")]);
        let g = resolve_cross_references(g, CrossRefMode::TermName).unwrap();
        assert_eq!(g.entries[1].normalized_definition, "Pathways");
    }

    #[test]
    fn self_reference_is_cycle() {
        let g = glossary(&[("Pathways", "See Pathways")]);
        assert_eq!(
            resolve_cross_references(g, CrossRefMode::Definition),
            Err(GlossaryError::ReferenceCycle { cycle: vec!["Pathways".into(), "Pathways".into()] })
        );
    }

    #[test]
    fn plain_definition_unchanged() {
        let g = glossary(&[("Forest", "Land with trees.")]);
        let r = resolve_cross_references(g.clone(), CrossRefMode::Definition).unwrap();
        assert_eq!(r.entries, g.entries);
    }

    #[test]
    fn see_prefix_needs_a_space() {
        assert_eq!(cross_reference_target("Seeds of plants."), None);
        assert_eq!(cross_reference_target("SEE ALSO Forest."), Some("Forest"));
        assert_eq!(cross_reference_target("See"), None);
    }

    #[test]
    fn subset_in_keep_order_with_warnings() {
        let g = glossary(&[("A", "a."), ("B", "b."), ("C", "c.")]);
        let (s, missing) = select_subset(&g, &["C".into(), "Frobnication".into(), "a".into()]);
        assert_eq!(s.terms().collect::<Vec<_>>(), vec!["C", "A"]);
        assert_eq!(missing, vec!["Frobnication"]);
    }

    #[test]
    fn keep_list_comments() {
        assert_eq!(parse_keep_list("# header\nA\n\n  B  \n#C\n"), vec!["A", "B"]);
    }

    #[test]
    fn jsonl_round_trip() {
        let g = resolve_cross_references(
            glossary(&[("P", "Thing. Extra."), ("Q", "See P.")]),
            CrossRefMode::Definition,
        )
        .unwrap();
        assert_eq!(from_jsonl(&to_jsonl(&g)).unwrap(), g);
    }

    proptest! {
        #[test]
        fn first_sentence_is_idempotent(t in "[A-Za-z .!?()\"'e.g]{1,60}") {
            if let Ok(once) = first_sentence(&t) {
                prop_assert_eq!(first_sentence(&once).unwrap(), once.clone());
                prop_assert!(text::is_single_sentence(&once));
            }
        }

        #[test]
        fn resolution_is_idempotent(defs in proptest::collection::vec(0usize..6, 1..6)) {
            // entry i either defines itself or cites a later entry, so no cycles
            let n = defs.len();
            let pairs: Vec<(String, String)> = defs
                .iter()
                .enumerate()
                .map(|(i, &d)| {
                    let def = if d < 3 && i + 1 < n { format!("See T{}.", i + 1) } else { format!("Def {i}.") };
                    (format!("T{i}"), def)
                })
                .collect();
            let refs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            let once = resolve_cross_references(glossary(&refs), CrossRefMode::Definition).unwrap();
            let twice = resolve_cross_references(once.clone(), CrossRefMode::Definition).unwrap();
            prop_assert_eq!(&once, &twice);
            for e in &once.entries {
                prop_assert!(cross_reference_target(&e.normalized_definition).is_none());
                prop_assert!(text::is_single_sentence(&e.normalized_definition));
            }
        }
    }
}
