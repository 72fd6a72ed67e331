//! Stage orchestration over an output directory.
//!
//! Each stage reads what the previous one wrote, so stages can be run one at
//! a time or all at once:
//!
//! | stage         | reads                          | writes                                   |
//! |---------------|--------------------------------|------------------------------------------|
//! | `ingest`      | snapshot, keep list            | `glossary.jsonl`, `ingest.json`          |
//! | `generate`    | `glossary.jsonl`               | `completions/<variant>.jsonl`            |
//! | `score`       | glossary, completions          | `scores/<variant>.jsonl`, `scores/meta.json` |
//! | `readability` | glossary, completions          | `readability.json`                       |
//! | `report`      | everything above               | `report.{json,txt}`, `summary.csv`, `terms.csv`, `histogram.csv` |
//!
//! Every invocation ends by writing `manifest.json`; a failed one also writes
//! `partial.json` listing the artifacts that were completed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Config, ConfigError, VariantConfig};
use crate::embedding::{self, Embedder, EmbeddingCache, EmbeddingError, EmbeddingProvider};
use crate::generation::{self, CompletionBackend, CompletionCache, CompletionSet, GenerationConfig, GenerationError, Generator};
use crate::glossary::{self, Glossary, GlossaryError};
use crate::metrics::{self, MetricsError};
use crate::prompting::{self, PromptError, TemplateRegistry};
use crate::readability::{self, ReadabilityError};
use crate::report::{self, AssembleOptions, ReportBundle, ReportError, VariantResult};
use crate::store::{digest, write_atomic};
use crate::{Bootstrap, TermScore};

/// Failure classes, each with its process exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration or arguments (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Generation or embedding backend failed after retries (exit 2).
    #[error("{0}")]
    Backend(String),
    /// Input data or intermediate artifacts are unusable (exit 3).
    #[error("{0}")]
    Data(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Backend(_) => 2,
            Error::Data(_) => 3,
        }
    }
}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        Error::Usage(e.to_string())
    }
}

impl From<PromptError> for Error {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Io { .. } | PromptError::Malformed { .. } => Error::Data(e.to_string()),
            _ => Error::Usage(e.to_string()),
        }
    }
}

impl From<GlossaryError> for Error {
    fn from(e: GlossaryError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<GenerationError> for Error {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Config(_) => Error::Usage(e.to_string()),
            GenerationError::Prompt(p) => p.into(),
            GenerationError::Cache(_) => Error::Data(e.to_string()),
            GenerationError::Partial { .. } => Error::Backend(e.to_string()),
        }
    }
}

impl From<EmbeddingError> for Error {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Config(_) => Error::Usage(e.to_string()),
            EmbeddingError::Provider { .. } | EmbeddingError::ProviderFault(_) => Error::Backend(e.to_string()),
            _ => Error::Data(e.to_string()),
        }
    }
}

impl From<MetricsError> for Error {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Embedding(inner) => inner.into(),
            other => Error::Data(other.to_string()),
        }
    }
}

impl From<ReadabilityError> for Error {
    fn from(e: ReadabilityError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<ReportError> for Error {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::BinWidth(_) => Error::Usage(e.to_string()),
            ReportError::Metrics(m) => m.into(),
            _ => Error::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

/// Backend traffic for one invocation; cache hits are not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub generation_calls: usize,
    pub embedding_calls: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub source_id: String,
    pub terms: usize,
    /// Keep-list names absent from the snapshot.
    pub missing_keep_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMeta {
    pub provider_id: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub meta: ScoreMeta,
    pub variants: BTreeMap<String, Vec<TermScore>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityReport {
    pub definitions: Bootstrap,
    pub variants: BTreeMap<String, Bootstrap>,
    pub warnings: Vec<String>,
}

pub type Completions = BTreeMap<String, Vec<CompletionSet>>;

/// Optional backend overrides, used by tests to inject mock backends.
#[derive(Default, Clone)]
pub struct Backends {
    pub completion: Option<Arc<dyn CompletionBackend>>,
    pub embedding: Option<Arc<dyn EmbeddingProvider>>,
}

pub struct Pipeline {
    cfg: Config,
    backends: Backends,
    stats: RunStats,
    started_at: String,
    written: Vec<PathBuf>,
    partial: Vec<Value>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, format!("{e} (run the earlier stages first)")))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    serde_json::from_str(&read(path)?).map_err(|e| io_err(path, e))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, Error> {
    read(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| io_err(path, format!("line {}: {e}", i + 1))))
        .collect()
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializes") + "\n").collect()
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes") + "\n"
}

impl Pipeline {
    pub fn new(cfg: Config) -> Result<Self, Error> {
        Self::with_backends(cfg, Backends::default())
    }

    pub fn with_backends(cfg: Config, backends: Backends) -> Result<Self, Error> {
        cfg.validate()?;
        cfg.generation.validate()?;
        cfg.embedding.validate()?;
        Ok(Self { cfg, backends, stats: RunStats::default(), started_at: now(), written: Vec::new(), partial: Vec::new() })
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    pub fn out_dir(&self) -> &Path {
        &self.cfg.out_dir
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.out_dir.join(rel)
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<(), Error> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        write_atomic(&path, contents.as_bytes()).map_err(|e| io_err(&path, e))?;
        self.written.push(PathBuf::from(rel));
        Ok(())
    }

    pub fn ingest(&mut self) -> Result<Glossary, Error> {
        let snapshot = self
            .cfg
            .glossary
            .snapshot
            .clone()
            .ok_or_else(|| Error::Usage("no glossary snapshot configured (use --glossary)".into()))?;
        let keep = match &self.cfg.glossary.keep_list {
            Some(p) => {
                let keep = glossary::load_keep_list(p)?;
                if keep.is_empty() {
                    return Err(Error::Data(format!("{}: keep list is empty", p.display())));
                }
                Some(keep)
            }
            None => None,
        };
        let full = glossary::load_snapshot(&snapshot)?;
        let full = glossary::resolve_cross_references(glossary::normalize(full)?, self.cfg.glossary.crossref_mode)?;
        let (g, missing) = match &keep {
            Some(keep) => glossary::select_subset(&full, keep),
            None => (full, Vec::new()),
        };
        for m in &missing {
            log::warn!("keep-list term `{m}` is not in the glossary");
        }
        if g.is_empty() {
            return Err(Error::Data("no glossary terms selected".into()));
        }
        self.write("glossary.jsonl", &glossary::to_jsonl(&g))?;
        let summary = IngestSummary { source_id: g.source_id.clone(), terms: g.len(), missing_keep_terms: missing };
        self.write("ingest.json", &pretty(&summary))?;
        Ok(g)
    }

    pub fn load_glossary(&self) -> Result<Glossary, Error> {
        Ok(glossary::from_jsonl(&read(&self.path("glossary.jsonl"))?)?)
    }

    fn registry(&self) -> Result<TemplateRegistry, Error> {
        let custom = match &self.cfg.prompting.template_file {
            Some(p) => prompting::load_template_file(p)?,
            None => Vec::new(),
        };
        Ok(TemplateRegistry::with_custom(custom)?)
    }

    fn generation_config(&self, v: &VariantConfig) -> GenerationConfig {
        let mut g = self.cfg.generation.clone();
        if let Some(m) = &v.model_name {
            g.model_name = m.clone();
        }
        g
    }

    pub fn generate(&mut self, g: &Glossary) -> Result<Completions, Error> {
        let registry = self.registry()?;
        let terms: Vec<String> = g.terms().map(str::to_string).collect();
        let cache = CompletionCache::open(self.cfg.cache_dir().join("completions"))
            .map_err(|e| io_err(&self.cfg.cache_dir(), e))?;
        let mut out = Completions::new();
        let mut failure = None;
        for v in self.cfg.variants.clone() {
            let templates = registry.select(&v.templates)?;
            let gen_cfg = self.generation_config(&v);
            let backend = match &self.backends.completion {
                Some(b) => b.clone(),
                None => generation::backend_from_config(&gen_cfg, self.cfg.seed)?,
            };
            let generator = Generator::new(backend, cache.clone(), gen_cfg)?;
            let results = generator.generate_all(&terms, &templates);
            self.stats.generation_calls += generator.backend_calls();
            let mut sets = Vec::with_capacity(results.len());
            for r in results {
                match r {
                    Ok(s) => sets.push(s),
                    Err(GenerationError::Partial { term, completed, failure: why }) => {
                        self.partial.push(json!({
                            "variant": v.id, "term": term, "completed": completed.len(), "failure": why,
                        }));
                        failure.get_or_insert_with(|| Error::Backend(format!("variant `{}`: `{term}`: {why}", v.id)));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let empty = sets.iter().flat_map(|s| &s.completions).filter(|c| c.empty).count();
            if empty > 0 {
                log::warn!("variant `{}`: {empty} empty completions", v.id);
            }
            if failure.is_none() {
                self.write(&format!("completions/{}.jsonl", v.id), &jsonl(&sets))?;
            }
            out.insert(v.id.clone(), sets);
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    pub fn load_completions(&self) -> Result<Completions, Error> {
        self.cfg
            .variants
            .iter()
            .map(|v| Ok((v.id.clone(), read_jsonl(&self.path(&format!("completions/{}.jsonl", v.id)))?)))
            .collect()
    }

    fn embedder(&self) -> Result<Embedder, Error> {
        let provider = match &self.backends.embedding {
            Some(p) => p.clone(),
            None => embedding::provider_from_config(&self.cfg.embedding)?,
        };
        let dir = self.cfg.embedding.cache_dir.clone().unwrap_or_else(|| self.cfg.cache_dir().join("embeddings"));
        let cache = EmbeddingCache::open(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Embedder::new(provider, cache, &self.cfg.embedding)?)
    }

    pub fn score(&mut self, g: &Glossary, completions: &Completions) -> Result<Scores, Error> {
        let embedder = self.embedder()?;
        let result = self.score_with(&embedder, g, completions);
        self.stats.embedding_calls += embedder.provider_calls();
        let scores = result?;
        for (id, s) in &scores.variants {
            self.write(&format!("scores/{id}.jsonl"), &jsonl(s))?;
        }
        self.write("scores/meta.json", &pretty(&scores.meta))?;
        Ok(scores)
    }

    fn score_with(&self, embedder: &Embedder, g: &Glossary, completions: &Completions) -> Result<Scores, Error> {
        let defs: Vec<&str> = g.entries.iter().map(|e| e.normalized_definition.as_str()).collect();
        let def_vecs = embedder.embed_batch::<f64>(&defs)?;
        let by_term: BTreeMap<&str, usize> = g.entries.iter().enumerate().map(|(i, e)| (e.term.as_str(), i)).collect();
        let mut warnings = Vec::new();
        let mut variants = BTreeMap::new();
        for (id, sets) in completions {
            let mut scores = Vec::with_capacity(sets.len());
            for set in sets {
                let &i = by_term
                    .get(set.term.as_str())
                    .ok_or_else(|| Error::Data(format!("variant `{id}`: completions for unknown term `{}`", set.term)))?;
                if set.completions.is_empty() {
                    return Err(MetricsError::NoCompletions.into());
                }
                let texts: Vec<&str> = set.texts().collect();
                let vecs = embedder.embed_batch::<f64>(&texts)?;
                let tagged: Vec<(String, _)> =
                    set.completions.iter().map(|c| c.template_id.clone()).zip(vecs).collect();
                let (score, w) = metrics::score_term(&set.term, &def_vecs[i], &tagged)?;
                warnings.extend(w.into_iter().map(|w| format!("{id}: {w}")));
                let empty = set.completions.iter().filter(|c| c.empty).count();
                if empty > 0 {
                    warnings.push(format!("{id}: `{}`: {empty} empty completions scored as the basis vector", set.term));
                }
                scores.push(score);
            }
            variants.insert(id.clone(), scores);
        }
        Ok(Scores { meta: ScoreMeta { provider_id: embedder.provider_id().to_string(), warnings }, variants })
    }

    pub fn load_scores(&self) -> Result<Scores, Error> {
        let meta = read_json(&self.path("scores/meta.json"))?;
        let variants = self
            .cfg
            .variants
            .iter()
            .map(|v| Ok((v.id.clone(), read_jsonl(&self.path(&format!("scores/{}.jsonl", v.id)))?)))
            .collect::<Result<_, Error>>()?;
        Ok(Scores { meta, variants })
    }

    pub fn readability(&mut self, g: &Glossary, completions: &Completions) -> Result<ReadabilityReport, Error> {
        let cfg = self.cfg.readability;
        let seed = self.cfg.seed;
        let mut warnings = Vec::new();
        let mut run = |label: &str, corpus: Vec<&str>| -> Result<Bootstrap, Error> {
            if corpus.is_empty() {
                return Err(Error::Data(format!("{label}: no non-empty texts to assess")));
            }
            let b = readability::bootstrap_readability::<f64>(&corpus, &cfg, seed)?;
            if b.short_excerpts > 0 {
                warnings.push(format!(
                    "{label}: {} of {} bootstrap excerpts stayed under {} words",
                    b.short_excerpts, cfg.iterations, cfg.min_words
                ));
            }
            Ok(b)
        };
        let definitions = run("definitions", g.entries.iter().map(|e| e.normalized_definition.as_str()).collect())?;
        let mut variants = BTreeMap::new();
        for (id, sets) in completions {
            let corpus = sets.iter().flat_map(|s| &s.completions).filter(|c| !c.empty).map(|c| c.text.as_str()).collect();
            variants.insert(id.clone(), run(id, corpus)?);
        }
        let r = ReadabilityReport { definitions, variants, warnings };
        self.write("readability.json", &pretty(&r))?;
        Ok(r)
    }

    pub fn load_readability(&self) -> Result<ReadabilityReport, Error> {
        read_json(&self.path("readability.json"))
    }

    pub fn report(&mut self, g: &Glossary, scores: &Scores, r: &ReadabilityReport) -> Result<ReportBundle, Error> {
        let ingest: IngestSummary = read_json(&self.path("ingest.json")).unwrap_or_default();
        let mut warnings: Vec<String> =
            ingest.missing_keep_terms.iter().map(|t| format!("keep-list term `{t}` is not in the glossary")).collect();
        warnings.extend(scores.meta.warnings.iter().cloned());
        warnings.extend(r.warnings.iter().cloned());

        let variants: Vec<VariantResult<'_>> = self
            .cfg
            .variants
            .iter()
            .map(|v| {
                let s = scores.variants.get(&v.id).ok_or_else(|| Error::Data(format!("no scores for variant `{}`", v.id)))?;
                let b = r.variants.get(&v.id).ok_or_else(|| Error::Data(format!("no readability for variant `{}`", v.id)))?;
                Ok(VariantResult {
                    id: &v.id,
                    model_name: v.model_name.as_deref().unwrap_or(&self.cfg.generation.model_name),
                    scores: s,
                    readability: b,
                })
            })
            .collect::<Result<_, Error>>()?;
        let opts = AssembleOptions {
            glossary_source: g.source_id.clone(),
            provider_id: scores.meta.provider_id.clone(),
            seed: self.cfg.seed,
            report_as: self.cfg.embedding.report_as,
            top_k: self.cfg.report.top_k,
            bin_width: self.cfg.report.bin_width,
        };
        let bundle = report::assemble(&opts, &variants, &r.definitions, warnings)?;
        self.write("report.json", &bundle.to_json())?;
        self.write("report.txt", &bundle.to_text())?;
        self.write("summary.csv", &bundle.summary_csv())?;
        self.write("terms.csv", &bundle.terms_csv())?;
        self.write("histogram.csv", &bundle.histogram_csv())?;
        Ok(bundle)
    }

    /// All stages in order, passing results along in memory.
    pub fn run(&mut self) -> Result<ReportBundle, Error> {
        let g = self.ingest()?;
        let completions = self.generate(&g)?;
        let scores = self.score(&g, &completions)?;
        let r = self.readability(&g, &completions)?;
        self.report(&g, &scores, &r)
    }

    /// Runs one stage by name, loading its inputs from the output directory.
    pub fn run_stage(&mut self, stage: &str) -> Result<(), Error> {
        match stage {
            "ingest" => self.ingest().map(drop),
            "generate" => {
                let g = self.load_glossary()?;
                self.generate(&g).map(drop)
            }
            "score" => {
                let g = self.load_glossary()?;
                let c = self.load_completions()?;
                self.score(&g, &c).map(drop)
            }
            "readability" => {
                let g = self.load_glossary()?;
                let c = self.load_completions()?;
                self.readability(&g, &c).map(drop)
            }
            "report" => {
                let g = self.load_glossary()?;
                let s = self.load_scores()?;
                let r = self.load_readability()?;
                self.report(&g, &s, &r).map(drop)
            }
            "run" => self.run().map(drop),
            other => Err(Error::Usage(format!("unknown stage `{other}`"))),
        }
    }

    /// Writes `manifest.json` and, on failure, `partial.json`. Errors here
    /// are logged rather than returned so they never mask the stage result.
    pub fn finish(&mut self, command: &str, outcome: &Result<(), Error>) {
        let finished_at = now();
        let run_id = digest(&[
            self.started_at.as_bytes(),
            &std::process::id().to_le_bytes(),
            command.as_bytes(),
            finished_at.as_bytes(),
        ])[..16]
            .to_string();
        let artifacts: Vec<String> = self.written.iter().map(|p| p.display().to_string()).collect();
        if let Err(e) = outcome {
            let partial = json!({
                "run_id": run_id,
                "command": command,
                "error": e.to_string(),
                "exit_code": e.exit_code(),
                "completed_artifacts": artifacts,
                "failed_terms": self.partial,
            });
            if let Err(e) = self.write("partial.json", &pretty(&partial)) {
                log::error!("cannot write partial.json: {e}");
            }
        } else if self.path("partial.json").exists() {
            let _ = std::fs::remove_file(self.path("partial.json"));
        }
        let manifest = json!({
            "run_id": run_id,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "status": if outcome.is_ok() { "ok" } else { "failed" },
            "started_at": self.started_at,
            "finished_at": finished_at,
            "seed": self.cfg.seed,
            "stats": self.stats,
            "variants": self.cfg.variants.iter().map(|v| json!({
                "id": v.id,
                "templates": v.templates,
                "model_name": v.model_name.as_deref().unwrap_or(&self.cfg.generation.model_name),
            })).collect::<Vec<_>>(),
            "artifacts": artifacts,
            "config": self.cfg,
        });
        if let Err(e) = self.write("manifest.json", &pretty(&manifest)) {
            log::error!("cannot write manifest.json: {e}");
        }
    }
}
