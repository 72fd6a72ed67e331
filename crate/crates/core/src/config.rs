//! Run configuration, read from TOML (or from the `config` field of a run
//! manifest). Every section is optional and falls back to its defaults.
//!
//! ```toml
//! seed = 42
//! out_dir = "out"
//!
//! [glossary]
//! snapshot = "glossary.jsonl"
//! keep_list = "keep.txt"
//! crossref_mode = "definition"     # or "term_name"
//!
//! [[variants]]
//! id = "base"
//! templates = ["base1", "base2", "base3", "base4", "base5"]
//!
//! [generation]
//! backend = "stub"                 # or "http_chat"
//! model_name = "stub"
//! samples_per_template = 5
//!
//! [embedding]
//! kind = "hashed_stub"             # or "http"
//! dimension = 256
//!
//! [readability]
//! iterations = 1000
//! sample_size = 50
//!
//! [report]
//! top_k = 3
//! bin_width = 0.05
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingProviderConfig;
use crate::generation::GenerationConfig;
use crate::glossary::CrossRefMode;
use crate::prompting::base_template_ids;
use crate::readability::BootstrapConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Drives the stub generator and the readability bootstrap.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub glossary: GlossaryConfig,
    pub prompting: PromptingConfig,
    pub variants: Vec<VariantConfig>,
    pub generation: GenerationConfig,
    pub embedding: EmbeddingProviderConfig,
    pub readability: BootstrapConfig,
    pub report: ReportConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            cache_dir: None,
            glossary: GlossaryConfig::default(),
            prompting: PromptingConfig::default(),
            variants: vec![VariantConfig::base()],
            generation: GenerationConfig::default(),
            embedding: EmbeddingProviderConfig::default(),
            readability: BootstrapConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlossaryConfig {
    pub snapshot: Option<PathBuf>,
    pub keep_list: Option<PathBuf>,
    pub crossref_mode: CrossRefMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptingConfig {
    pub template_file: Option<PathBuf>,
}

/// One evaluated configuration: a set of templates, optionally with its own
/// model. Each variant becomes one summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub id: String,
    pub templates: Vec<String>,
    #[serde(default)]
    pub model_name: Option<String>,
}

impl VariantConfig {
    pub fn base() -> Self {
        Self { id: "base".into(), templates: base_template_ids(), model_name: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub top_k: usize,
    pub bin_width: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { top_k: 3, bin_width: 0.05 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl Config {
    /// Loads TOML, or a JSON run manifest (its `config` field). Relative
    /// paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        let parse_err = |message: String| ConfigError::Parse { path: path.display().to_string(), message };
        let mut cfg: Config = if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
            let inner = v.get("config").cloned().unwrap_or(v);
            serde_json::from_value(inner).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        for p in [
            &mut self.cache_dir,
            &mut self.glossary.snapshot,
            &mut self.glossary.keep_list,
            &mut self.prompting.template_file,
            &mut self.embedding.cache_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.variants.is_empty() {
            return Err(ConfigError::Invalid("at least one variant is required".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for v in &self.variants {
            if v.id.is_empty() || !v.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(ConfigError::Invalid(format!("variant id `{}` must be [A-Za-z0-9_-]+", v.id)));
            }
            if !ids.insert(&v.id) {
                return Err(ConfigError::Invalid(format!("duplicate variant `{}`", v.id)));
            }
            if v.templates.is_empty() {
                return Err(ConfigError::Invalid(format!("variant `{}` has no templates", v.id)));
            }
        }
        if self.report.bin_width.is_nan() || self.report.bin_width <= 0.0 {
            return Err(ConfigError::Invalid("report.bin_width must be positive".into()));
        }
        Ok(())
    }
}
