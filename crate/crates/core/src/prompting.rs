//! Prompt templates for definition requests.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Replaced by the glossary term when a template is rendered.
pub const PLACEHOLDER: &str = "[TERM]";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("term is empty")]
    EmptyTerm,
    #[error("template `{id}` must contain {PLACEHOLDER} exactly once (found {found})")]
    Placeholder { id: String, found: usize },
    #[error("template id `{0}` is already registered")]
    DuplicateId(String),
    #[error("template id `{0}` is reserved for a builtin template")]
    ReservedId(String),
    #[error("unknown template id `{0}`")]
    UnknownId(String),
    #[error("template file record {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateFamily {
    Base,
    Ipcc,
    Readable,
    IpccReadable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub family: TemplateFamily,
    pub pattern: String,
}

impl PromptTemplate {
    pub fn new(id: &str, family: TemplateFamily, pattern: &str) -> Result<Self, PromptError> {
        let found = pattern.matches(PLACEHOLDER).count();
        if found != 1 {
            return Err(PromptError::Placeholder { id: id.to_string(), found });
        }
        Ok(Self { id: id.to_string(), family, pattern: pattern.to_string() })
    }

    /// Substitutes `term` verbatim for the placeholder.
    pub fn render(&self, term: &str) -> Result<String, PromptError> {
        if term.is_empty() {
            return Err(PromptError::EmptyTerm);
        }
        Ok(self.pattern.replacen(PLACEHOLDER, term, 1))
    }
}

const DEFINE: &str = "Define \"[TERM]\" in one sentence.";
const ADHERE: &str =
    " Adhere to the official Intergovernmental Panel on Climate Change (IPCC) glossary without citing it.";
const READABLE: &str = " You must also make the definition understandable by a 10-year old.";

/// The five base phrasings followed by the three ablation variants.
pub fn builtin_templates() -> Vec<PromptTemplate> {
    let t = |id: &str, family, pattern: String| PromptTemplate { id: id.into(), family, pattern };
    vec![
        t("base1", TemplateFamily::Base, DEFINE.into()),
        t("base2", TemplateFamily::Base, "How would you define \"[TERM]\" in a single sentence?".into()),
        t("base3", TemplateFamily::Base, "Can you describe \"[TERM]\" in just one sentence?".into()),
        t("base4", TemplateFamily::Base, "What is your one-sentence definition of \"[TERM]\"?".into()),
        t("base5", TemplateFamily::Base, "In one sentence, what does \"[TERM]\" mean to you?".into()),
        t("ipcc", TemplateFamily::Ipcc, format!("{DEFINE}{ADHERE}")),
        t("readable", TemplateFamily::Readable, format!("{DEFINE}{READABLE}")),
        t("ipcc_readable", TemplateFamily::IpccReadable, format!("{DEFINE}{ADHERE}{READABLE}")),
    ]
}

/// IDs of the base family, in order.
pub fn base_template_ids() -> Vec<String> {
    builtin_templates()
        .into_iter()
        .filter(|t| t.family == TemplateFamily::Base)
        .map(|t| t.id)
        .collect()
}

/// Builtins plus any custom templates; immutable once built.
#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: Vec<PromptTemplate>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self { templates: builtin_templates() }
    }
}

impl TemplateRegistry {
    pub fn with_custom(custom: Vec<PromptTemplate>) -> Result<Self, PromptError> {
        let mut registry = Self::default();
        let reserved: HashSet<String> = registry.templates.iter().map(|t| t.id.clone()).collect();
        let mut ids = HashSet::new();
        for t in custom {
            if reserved.contains(&t.id) {
                return Err(PromptError::ReservedId(t.id));
            }
            if !ids.insert(t.id.clone()) {
                return Err(PromptError::DuplicateId(t.id));
            }
            let t = PromptTemplate::new(&t.id, t.family, &t.pattern)?;
            registry.templates.push(t);
        }
        Ok(registry)
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| PromptError::UnknownId(id.to_string()))
    }

    pub fn select(&self, ids: &[String]) -> Result<Vec<PromptTemplate>, PromptError> {
        ids.iter().map(|id| self.get(id).cloned()).collect()
    }

    pub fn all(&self) -> &[PromptTemplate] {
        &self.templates
    }
}

/// Template file: JSON lines with `id`, `family` and `pattern`.
pub fn parse_template_file(input: &str) -> Result<Vec<PromptTemplate>, PromptError> {
    input
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(index, line)| {
            let t: PromptTemplate = serde_json::from_str(line)
                .map_err(|e| PromptError::Malformed { index, reason: e.to_string() })?;
            PromptTemplate::new(&t.id, t.family, &t.pattern)
        })
        .collect()
}

pub fn load_template_file(path: &Path) -> Result<Vec<PromptTemplate>, PromptError> {
    let input = std::fs::read_to_string(path).map_err(|e| PromptError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_template_file(&input)
}
