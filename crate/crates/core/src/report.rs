//! Report shapes: the per-model summary table, top/bottom rankings, the
//! adherence histogram, per-term scores and the ablation comparison, with
//! text, CSV and JSON renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::ReportAs;
use crate::metrics::{self, MetricsError, RankKey};
use crate::{AggregateStats, Bootstrap, ReadabilityEstimate, TermScore};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("bin width must be positive, got {0}")]
    BinWidth(f64),
    #[error("ablation bundles disagree on {what}: `{a}` vs `{b}`")]
    Mismatch { what: &'static str, a: String, b: String },
    #[error("no bundles to compare")]
    NoBundles,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Fixed-width bins over [0, 1]; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `counts.len() + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Scores outside [0, 1], counted in the nearest end bin.
    pub clamped: usize,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn emit_histogram(scores: &[f64], bin_width: f64) -> Result<Histogram, ReportError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(ReportError::BinWidth(bin_width));
    }
    let per_unit = 1.0 / bin_width;
    let exact = (per_unit - per_unit.round()).abs() < 1e-9;
    let bins = if exact { per_unit.round() as usize } else { per_unit.ceil() as usize }.max(1);
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if exact { i as f64 / bins as f64 } else { (i as f64 * bin_width).min(1.0) })
        .collect();

    let mut counts = vec![0; bins];
    let mut clamped = 0;
    for &s in scores {
        let v = if (0.0..=1.0).contains(&s) {
            s
        } else {
            clamped += 1;
            s.clamp(0.0, 1.0)
        };
        let mut idx = ((v * bins as f64) as usize).min(bins - 1);
        while idx > 0 && v < edges[idx] {
            idx -= 1;
        }
        while idx + 1 < bins && v >= edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    Ok(Histogram { bin_width, edges, counts, clamped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// Variant id, or `definitions` for the official-definitions row.
    pub label: String,
    pub model_name: Option<String>,
    pub adherence: Option<AggregateStats>,
    /// Robustness over all completions of a term.
    pub robustness: Option<AggregateStats>,
    /// Per-term mean of the within-template robustness values.
    pub robustness_per_template: Option<AggregateStats>,
    pub word_count: ReadabilityEstimate,
    pub gunning_fog: ReadabilityEstimate,
    pub flesch_kincaid: ReadabilityEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTerm {
    pub term: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub variant: String,
    pub key: RankKey,
    pub top: Vec<RankedTerm>,
    pub bottom: Vec<RankedTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantHistogram {
    pub variant: String,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub variant: String,
    pub term: String,
    pub n: usize,
    pub adherence: f64,
    pub robustness: Option<f64>,
    pub per_template_robustness: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub glossary_source: String,
    pub provider_id: String,
    pub seed: u64,
    pub report_as: ReportAs,
    pub summary: Vec<SummaryRow>,
    pub rankings: Vec<Ranking>,
    pub histograms: Vec<VariantHistogram>,
    pub term_scores: Vec<TermRow>,
    pub warnings: Vec<String>,
}

/// Scores and readability for one variant, as handed to [`assemble`].
pub struct VariantResult<'a> {
    pub id: &'a str,
    pub model_name: &'a str,
    pub scores: &'a [TermScore],
    pub readability: &'a Bootstrap,
}

pub struct AssembleOptions {
    pub glossary_source: String,
    pub provider_id: String,
    pub seed: u64,
    pub report_as: ReportAs,
    pub top_k: usize,
    pub bin_width: f64,
}

pub fn assemble(
    opts: &AssembleOptions,
    variants: &[VariantResult<'_>],
    definitions: &Bootstrap,
    mut warnings: Vec<String>,
) -> Result<ReportBundle, ReportError> {
    let scale = |v: f64| opts.report_as.apply(v);
    let mut summary = Vec::new();
    let mut rankings = Vec::new();
    let mut histograms = Vec::new();
    let mut term_scores = Vec::new();

    for v in variants {
        let adherence: Vec<f64> = v.scores.iter().map(|s| s.adherence).collect();
        let robustness: Vec<f64> = v.scores.iter().filter_map(|s| s.robustness).collect();
        let per_template: Vec<f64> = v.scores.iter().filter_map(|s| s.mean_template_robustness()).collect();
        let stats = |xs: &[f64]| -> Result<Option<AggregateStats>, ReportError> {
            if xs.is_empty() {
                return Ok(None);
            }
            Ok(Some(metrics::aggregate(xs)?.map_affine(scale)))
        };
        summary.push(SummaryRow {
            label: v.id.to_string(),
            model_name: Some(v.model_name.to_string()),
            adherence: stats(&adherence)?,
            robustness: stats(&robustness)?,
            robustness_per_template: stats(&per_template)?,
            word_count: v.readability.word_count.clone(),
            gunning_fog: v.readability.gunning_fog.clone(),
            flesch_kincaid: v.readability.flesch_kincaid.clone(),
        });

        for key in [RankKey::Adherence, RankKey::Robustness] {
            let available = v.scores.iter().filter(|s| s.key(key).is_some()).count();
            let k = opts.top_k.min(available);
            if k < opts.top_k {
                warnings.push(format!("{}: only {available} terms ranked by {key:?}; k reduced to {k}", v.id));
            }
            let (top, bottom) = metrics::rank_terms(v.scores, key, k)?;
            let row = |s: &&TermScore| RankedTerm { term: s.term.clone(), value: scale(s.key(key).unwrap_or(f64::NAN)) };
            rankings.push(Ranking {
                variant: v.id.to_string(),
                key,
                top: top.iter().map(row).collect(),
                bottom: bottom.iter().map(row).collect(),
            });
        }

        let scaled: Vec<f64> = adherence.iter().map(|&a| scale(a)).collect();
        let histogram = emit_histogram(&scaled, opts.bin_width)?;
        if histogram.clamped > 0 {
            warnings.push(format!("{}: {} adherence values outside [0, 1] clamped into end bins", v.id, histogram.clamped));
        }
        histograms.push(VariantHistogram { variant: v.id.to_string(), histogram });

        term_scores.extend(v.scores.iter().map(|s| TermRow {
            variant: v.id.to_string(),
            term: s.term.clone(),
            n: s.n,
            adherence: scale(s.adherence),
            robustness: s.robustness.map(scale),
            per_template_robustness: s.per_template_robustness.iter().map(|(k, &r)| (k.clone(), scale(r))).collect(),
        }));
    }

    summary.push(SummaryRow {
        label: "definitions".into(),
        model_name: None,
        adherence: None,
        robustness: None,
        robustness_per_template: None,
        word_count: definitions.word_count.clone(),
        gunning_fog: definitions.gunning_fog.clone(),
        flesch_kincaid: definitions.flesch_kincaid.clone(),
    });

    Ok(ReportBundle {
        glossary_source: opts.glossary_source.clone(),
        provider_id: opts.provider_id.clone(),
        seed: opts.seed,
        report_as: opts.report_as,
        summary,
        rankings,
        histograms,
        term_scores,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub ablation: String,
    pub model_name: Option<String>,
    pub adherence: Option<AggregateStats>,
    pub word_count: ReadabilityEstimate,
    pub gunning_fog: ReadabilityEstimate,
    pub flesch_kincaid: ReadabilityEstimate,
}

/// Side-by-side rows, one per model variant of each named bundle. Bundles
/// must share the glossary and embedding provider.
pub fn compare_ablations(bundles: &BTreeMap<String, ReportBundle>) -> Result<Vec<AblationRow>, ReportError> {
    let first = bundles.values().next().ok_or(ReportError::NoBundles)?;
    for b in bundles.values() {
        if b.glossary_source != first.glossary_source {
            return Err(ReportError::Mismatch { what: "glossary", a: first.glossary_source.clone(), b: b.glossary_source.clone() });
        }
        if b.provider_id != first.provider_id {
            return Err(ReportError::Mismatch { what: "embedding provider", a: first.provider_id.clone(), b: b.provider_id.clone() });
        }
    }
    let mut rows = Vec::new();
    for (id, b) in bundles {
        let model_rows: Vec<&SummaryRow> = b.summary.iter().filter(|r| r.model_name.is_some()).collect();
        for r in &model_rows {
            rows.push(AblationRow {
                ablation: if model_rows.len() == 1 { id.clone() } else { format!("{id}/{}", r.label) },
                model_name: r.model_name.clone(),
                adherence: r.adherence,
                word_count: r.word_count.clone(),
                gunning_fog: r.gunning_fog.clone(),
                flesch_kincaid: r.flesch_kincaid.clone(),
            });
        }
    }
    Ok(rows)
}

fn pm(mean: f64, std: f64, decimals: usize) -> String {
    format!("{mean:.decimals$} ± {std:.decimals$}")
}

fn pm_stats(s: &Option<AggregateStats>) -> String {
    s.as_ref().map_or_else(|| "-".into(), |s| pm(s.mean, s.std, 2))
}

fn pm_est(e: &ReadabilityEstimate) -> String {
    pm(e.mean, e.std, 1)
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(c);
            s.extend(std::iter::repeat_n(' ', w - c.chars().count()));
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

impl ReportBundle {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes") + "\n"
    }

    pub fn summary_text(&self) -> String {
        let label = match self.report_as {
            ReportAs::Similarity => "",
            ReportAs::Distance => " (distance)",
        };
        let rows: Vec<Vec<String>> = self
            .summary
            .iter()
            .map(|r| {
                vec![
                    r.label.clone(),
                    r.model_name.clone().unwrap_or_else(|| "-".into()),
                    pm_stats(&r.adherence),
                    pm_stats(&r.robustness),
                    pm_stats(&r.robustness_per_template),
                    pm_est(&r.word_count),
                    pm_est(&r.gunning_fog),
                    pm_est(&r.flesch_kincaid),
                ]
            })
            .collect();
        let adherence = format!("Adherence{label}");
        let robustness = format!("Robustness{label}");
        aligned(
            &["Row", "Model", &adherence, &robustness, "Robustness/template", "Num Words", "Gunning Fog", "Flesch-Kincaid"],
            &rows,
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "glossary: {}  embedder: {}  seed: {}\n", self.glossary_source, self.provider_id, self.seed);
        out.push_str(&self.summary_text());
        for r in &self.rankings {
            let _ = writeln!(out, "\n{} by {:?}", r.variant, r.key);
            for (side, list) in [("highest", &r.top), ("lowest", &r.bottom)] {
                let _ = writeln!(out, "  {side}:");
                for (i, t) in list.iter().enumerate() {
                    let _ = writeln!(out, "    {}. {} ({:.3})", i + 1, t.term, t.value);
                }
            }
        }
        for h in &self.histograms {
            let _ = writeln!(out, "\n{} adherence histogram", h.variant);
            let last = h.histogram.counts.len() - 1;
            for (i, c) in h.histogram.counts.iter().enumerate() {
                let close = if i == last { ']' } else { ')' };
                let line = format!(
                    "  [{:.2}, {:.2}{close} {:>4} {}",
                    h.histogram.edges[i],
                    h.histogram.edges[i + 1],
                    c,
                    "#".repeat(*c)
                );
                let _ = writeln!(out, "{}", line.trim_end());
            }
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(out, "\nwarnings:");
            for w in &self.warnings {
                let _ = writeln!(out, "  - {w}");
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "row", "model", "adherence_mean", "adherence_std", "robustness_mean", "robustness_std",
            "robustness_template_mean", "robustness_template_std", "words_mean", "words_std",
            "gunning_fog_mean", "gunning_fog_std", "flesch_kincaid_mean", "flesch_kincaid_std",
        ])
        .expect("csv write");
        let opt = |s: &Option<AggregateStats>| match s {
            Some(s) => [s.mean.to_string(), s.std.to_string()],
            None => [String::new(), String::new()],
        };
        for r in &self.summary {
            let mut rec = vec![r.label.clone(), r.model_name.clone().unwrap_or_default()];
            rec.extend(opt(&r.adherence));
            rec.extend(opt(&r.robustness));
            rec.extend(opt(&r.robustness_per_template));
            for e in [&r.word_count, &r.gunning_fog, &r.flesch_kincaid] {
                rec.extend([e.mean.to_string(), e.std.to_string()]);
            }
            w.write_record(&rec).expect("csv write");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8")
    }

    pub fn terms_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["variant", "term", "n", "adherence", "robustness"]).expect("csv write");
        for t in &self.term_scores {
            w.write_record([
                t.variant.clone(),
                t.term.clone(),
                t.n.to_string(),
                t.adherence.to_string(),
                t.robustness.map(|r| r.to_string()).unwrap_or_default(),
            ])
            .expect("csv write");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8")
    }

    /// `(variant, bin_low, bin_high, count)` rows for external plotting.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("variant,bin_low,bin_high,count\n");
        for h in &self.histograms {
            for (i, c) in h.histogram.counts.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{}", h.variant, h.histogram.edges[i], h.histogram.edges[i + 1], c);
            }
        }
        out
    }
}

pub fn ablation_text(rows: &[AblationRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.ablation.clone(),
                pm_stats(&r.adherence),
                pm_est(&r.word_count),
                pm_est(&r.gunning_fog),
                pm_est(&r.flesch_kincaid),
            ]
        })
        .collect();
    aligned(&["Ablation", "Adherence", "Num Words", "Gunning Fog", "Flesch-Kincaid"], &body)
}
