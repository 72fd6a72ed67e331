//! Scoring of machine-generated glossary definitions against official ones.
//!
//! The pipeline ingests a glossary snapshot, asks a text-generation backend
//! for several one-sentence definitions per term, embeds everything, and
//! reports three things per model: adherence (similarity of generated to
//! official definitions), robustness (agreement among the generations) and
//! readability of both corpora.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the pipeline uses.

pub mod config;
pub mod embedding;
pub mod generation;
pub mod glossary;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod prompting;
pub mod readability;
pub mod report;
mod scalar;
pub mod store;
pub mod text;

pub use scalar::Scalar;

pub type Embedding = embedding::EmbeddingVector<f64>;
pub type Embedding32 = embedding::EmbeddingVector<f32>;
pub type TermScore = metrics::TermScore<f64>;
pub type AggregateStats = metrics::AggregateStats<f64>;
pub type ReadabilityEstimate = readability::ReadabilityEstimate<f64>;
pub type Bootstrap = readability::Bootstrap<f64>;
