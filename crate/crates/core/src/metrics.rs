//! Adherence and robustness of generated definitions.
//!
//! For a term with reference definition `d` and completions `m_1..m_n`:
//!
//! * adherence is the mean of `cos(d, m_k)` over all `k`;
//! * robustness is the mean of `cos(m_p, m_q)` over all `n(n-1)/2` unordered
//!   pairs `p < q`.
//!
//! Robustness is reported over the whole completion set and separately
//! within each prompt template.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, EmbeddingError, EmbeddingVector};
use crate::scalar::{self, Scalar};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("adherence needs at least one completion")]
    NoCompletions,
    #[error("robustness needs at least two completions, got {0}")]
    TooFewCompletions(usize),
    #[error("cannot aggregate an empty list")]
    EmptyAggregate,
    #[error("k = {k} exceeds the {available} scored terms")]
    RankTooLarge { k: usize, available: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Number of unordered pairs among `n` items.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// `cos(d, m_k)` for every completion, in order.
pub fn completion_similarities<T: Scalar>(d: &EmbeddingVector<T>, completions: &[EmbeddingVector<T>]) -> Result<Vec<T>, MetricsError> {
    completions.iter().map(|m| Ok(cosine_similarity(d, m)?)).collect()
}

/// `cos(m_p, m_q)` for `p < q`, row-major.
pub fn pair_similarities<T: Scalar>(completions: &[EmbeddingVector<T>]) -> Result<Vec<T>, MetricsError> {
    let mut out = Vec::with_capacity(pair_count(completions.len()));
    for (p, a) in completions.iter().enumerate() {
        for b in &completions[p + 1..] {
            out.push(cosine_similarity(a, b)?);
        }
    }
    Ok(out)
}

pub fn adherence<T: Scalar>(d: &EmbeddingVector<T>, completions: &[EmbeddingVector<T>]) -> Result<T, MetricsError> {
    if completions.is_empty() {
        return Err(MetricsError::NoCompletions);
    }
    Ok(scalar::mean(&completion_similarities(d, completions)?))
}

pub fn robustness<T: Scalar>(completions: &[EmbeddingVector<T>]) -> Result<T, MetricsError> {
    if completions.len() < 2 {
        return Err(MetricsError::TooFewCompletions(completions.len()));
    }
    Ok(scalar::mean(&pair_similarities(completions)?))
}

/// Robustness within each template group. Groups with fewer than two members
/// are left out and named in the returned warnings.
pub fn per_template_robustness<T: Scalar>(
    groups: &BTreeMap<String, Vec<EmbeddingVector<T>>>,
) -> Result<(BTreeMap<String, T>, Vec<String>), MetricsError> {
    let mut values = BTreeMap::new();
    let mut warnings = Vec::new();
    for (id, members) in groups {
        if members.len() < 2 {
            warnings.push(format!("template `{id}` has {} completion(s); robustness omitted", members.len()));
            continue;
        }
        values.insert(id.clone(), robustness(members)?);
    }
    Ok((values, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TermScore<T> {
    pub term: String,
    pub adherence: T,
    /// `None` when the term has fewer than two completions.
    pub robustness: Option<T>,
    pub n: usize,
    pub per_completion_sims: Vec<T>,
    pub per_pair_sims: Vec<T>,
    pub per_template_robustness: BTreeMap<String, T>,
}

impl<T: Scalar> TermScore<T> {
    pub fn key(&self, key: RankKey) -> Option<T> {
        match key {
            RankKey::Adherence => Some(self.adherence),
            RankKey::Robustness => self.robustness,
        }
    }

    /// Mean of the per-template values, if any template had two members.
    pub fn mean_template_robustness(&self) -> Option<T> {
        let v: Vec<T> = self.per_template_robustness.values().copied().collect();
        (!v.is_empty()).then(|| scalar::mean(&v))
    }
}

/// Scores one term. `completions` pairs each vector with its template id and
/// must already be in (template, sample) order.
pub fn score_term<T: Scalar>(
    term: &str,
    definition: &EmbeddingVector<T>,
    completions: &[(String, EmbeddingVector<T>)],
) -> Result<(TermScore<T>, Vec<String>), MetricsError> {
    let vectors: Vec<EmbeddingVector<T>> = completions.iter().map(|(_, v)| v.clone()).collect();
    let per_completion_sims = completion_similarities(definition, &vectors)?;
    if per_completion_sims.is_empty() {
        return Err(MetricsError::NoCompletions);
    }
    let per_pair_sims = pair_similarities(&vectors)?;
    let mut groups: BTreeMap<String, Vec<EmbeddingVector<T>>> = BTreeMap::new();
    for (id, v) in completions {
        groups.entry(id.clone()).or_default().push(v.clone());
    }
    let (per_template_robustness, mut warnings) = per_template_robustness(&groups)?;
    for w in &mut warnings {
        *w = format!("`{term}`: {w}");
    }
    let robustness = (!per_pair_sims.is_empty()).then(|| scalar::mean(&per_pair_sims));
    if robustness.is_none() {
        warnings.push(format!("`{term}`: fewer than two completions; robustness omitted"));
    }
    Ok((
        TermScore {
            term: term.to_string(),
            adherence: scalar::mean(&per_completion_sims),
            robustness,
            n: vectors.len(),
            per_completion_sims,
            per_pair_sims,
            per_template_robustness,
        },
        warnings,
    ))
}

/// Mean with population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AggregateStats<T> {
    pub mean: T,
    pub std: T,
    pub min: T,
    pub max: T,
    pub count: usize,
}

pub fn aggregate<T: Scalar>(values: &[T]) -> Result<AggregateStats<T>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyAggregate);
    }
    let min = values.iter().copied().fold(T::infinity(), T::min);
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    let mean = scalar::mean(values);
    let std = scalar::population_std(values, mean);
    // rounding can push the mean of equal values one ulp past them
    let mean = mean.max(min).min(max);
    Ok(AggregateStats { mean, std, min, max, count: values.len() })
}

impl<T: Scalar> AggregateStats<T> {
    /// Stats of `f(v)` for an affine, decreasing-or-increasing `f`.
    pub fn map_affine(self, f: impl Fn(T) -> T) -> Self {
        let (a, b) = (f(self.min), f(self.max));
        Self { mean: f(self.mean), std: self.std, min: a.min(b), max: a.max(b), count: self.count }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankKey {
    Adherence,
    Robustness,
}

/// `(top, bottom)` references into the scored terms.
pub type Ranked<'a, T> = (Vec<&'a TermScore<T>>, Vec<&'a TermScore<T>>);

/// Top `k` (descending) and bottom `k` (ascending) by `key`; ties go to the
/// lexicographically smaller term in both lists. Terms without a value for
/// `key` are skipped.
pub fn rank_terms<T: Scalar>(
    scores: &[TermScore<T>],
    key: RankKey,
    k: usize,
) -> Result<Ranked<'_, T>, MetricsError> {
    let mut ranked: Vec<(&TermScore<T>, T)> = scores.iter().filter_map(|s| s.key(key).map(|v| (s, v))).collect();
    if k > ranked.len() {
        return Err(MetricsError::RankTooLarge { k, available: ranked.len() });
    }
    let by_value = |a: &(&TermScore<T>, T), b: &(&TermScore<T>, T)| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal);
    ranked.sort_by(|a, b| by_value(b, a).then_with(|| a.0.term.cmp(&b.0.term)));
    let top = ranked[..k].iter().map(|r| r.0).collect();
    ranked.sort_by(|a, b| by_value(a, b).then_with(|| a.0.term.cmp(&b.0.term)));
    let bottom = ranked[..k].iter().map(|r| r.0).collect();
    Ok((top, bottom))
}
