//! Flesch-Kincaid grade and Gunning-Fog index over bootstrapped excerpts.
//!
//! Both formulas need long passages, while glossary definitions are single
//! sentences. Each bootstrap iteration therefore joins `sample_size`
//! definitions drawn with replacement and scores the joined excerpt.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, AggregateStats};
use crate::scalar::{self, Scalar};
use crate::text;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReadabilityError {
    #[error("text has no sentences or no words")]
    NoText,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("bootstrap {0} must be at least 1")]
    BadParameter(&'static str),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextStats {
    pub sentences: usize,
    pub words: usize,
    pub syllables: usize,
    /// Words of three or more syllables.
    pub complex_words: usize,
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

fn is_consonant(c: char) -> bool {
    c.is_alphabetic() && !is_vowel(c)
}

/// Vowel-group heuristic on the word's letters (lowercased): count maximal
/// runs of `aeiouy`, drop one for a final `e` after a consonant unless the
/// word ends consonant + `le`, never go below 1. Words without letters
/// (numbers) count as 1.
pub fn count_syllables(word: &str) -> usize {
    let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).flat_map(char::to_lowercase).collect();
    if letters.is_empty() {
        return 1;
    }
    let mut groups = 0;
    let mut in_group = false;
    for &c in &letters {
        let v = is_vowel(c);
        if v && !in_group {
            groups += 1;
        }
        in_group = v;
    }
    let n = letters.len();
    if n >= 2 && letters[n - 1] == 'e' && is_consonant(letters[n - 2]) {
        let consonant_le = letters[n - 2] == 'l' && n >= 3 && is_consonant(letters[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    }
    groups.max(1)
}

/// Counts under the shared tokenizer. Sentences without any word token
/// (stray punctuation) are not counted.
pub fn text_stats(text: &str) -> TextStats {
    let sentences = text::split_sentences(text)
        .into_iter()
        .filter(|s| !text::words(s).is_empty())
        .count();
    let mut stats = TextStats { sentences, ..Default::default() };
    for w in text::words(text) {
        let s = count_syllables(w);
        stats.words += 1;
        stats.syllables += s;
        if s >= 3 {
            stats.complex_words += 1;
        }
    }
    stats
}

fn ratios<T: Scalar>(stats: &TextStats) -> Result<(T, T), ReadabilityError> {
    if stats.sentences == 0 || stats.words == 0 {
        return Err(ReadabilityError::NoText);
    }
    let words = T::of_usize(stats.words);
    Ok((words / T::of_usize(stats.sentences), words))
}

/// `0.39 * words/sentences + 11.8 * syllables/words - 15.59`
pub fn flesch_kincaid<T: Scalar>(stats: &TextStats) -> Result<T, ReadabilityError> {
    let (wps, words) = ratios::<T>(stats)?;
    Ok(T::of(0.39) * wps + T::of(11.8) * (T::of_usize(stats.syllables) / words) - T::of(15.59))
}

/// `0.4 * (words/sentences + 100 * complex_words/words)`
pub fn gunning_fog<T: Scalar>(stats: &TextStats) -> Result<T, ReadabilityError> {
    let (wps, words) = ratios::<T>(stats)?;
    Ok(T::of(0.4) * (wps + T::of(100.0) * (T::of_usize(stats.complex_words) / words)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadabilityMetric {
    FleschKincaid,
    GunningFog,
    WordCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ReadabilityEstimate<T> {
    pub metric: ReadabilityMetric,
    pub mean: T,
    pub std: T,
    pub iterations: usize,
    pub sample_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub sample_size: usize,
    /// Excerpts shorter than this are redrawn.
    pub min_words: usize,
    pub max_redraws: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { iterations: 1000, sample_size: 50, min_words: 100, max_redraws: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Bootstrap<T> {
    pub flesch_kincaid: ReadabilityEstimate<T>,
    pub gunning_fog: ReadabilityEstimate<T>,
    /// Mean and population std of single-definition word counts.
    pub word_count: ReadabilityEstimate<T>,
    /// Iterations that stayed under `min_words` after every redraw.
    pub short_excerpts: usize,
}

impl<T: Scalar> Bootstrap<T> {
    pub fn estimates(&self) -> [&ReadabilityEstimate<T>; 3] {
        [&self.flesch_kincaid, &self.gunning_fog, &self.word_count]
    }
}

/// Uniform index in `0..n` from one 64-bit draw: `(x * n) >> 64`.
pub fn draw_index(rng: &mut impl RngCore, n: usize) -> usize {
    ((u128::from(rng.next_u64()) * n as u128) >> 64) as usize
}

/// Generator for bootstrap iteration `iteration`: ChaCha8 seeded with
/// `seed_from_u64(seed)` on stream `iteration`.
pub fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

/// Builds the excerpt for one iteration, redrawing while it is shorter than
/// `min_words`. Returns the excerpt stats and whether it stayed short.
pub fn draw_excerpt(corpus: &[&str], cfg: &BootstrapConfig, seed: u64, iteration: usize) -> (TextStats, bool) {
    let mut rng = iteration_rng(seed, iteration);
    let mut excerpt = String::new();
    let mut redraws = 0;
    loop {
        excerpt.clear();
        for k in 0..cfg.sample_size {
            if k > 0 {
                excerpt.push(' ');
            }
            excerpt.push_str(corpus[draw_index(&mut rng, corpus.len())]);
        }
        let stats = text_stats(&excerpt);
        if stats.words >= cfg.min_words {
            return (stats, false);
        }
        if redraws == cfg.max_redraws {
            return (stats, true);
        }
        redraws += 1;
    }
}

pub fn bootstrap_readability<T: Scalar>(corpus: &[&str], cfg: &BootstrapConfig, seed: u64) -> Result<Bootstrap<T>, ReadabilityError> {
    if corpus.is_empty() {
        return Err(ReadabilityError::EmptyCorpus);
    }
    if cfg.iterations == 0 {
        return Err(ReadabilityError::BadParameter("iterations"));
    }
    if cfg.sample_size == 0 {
        return Err(ReadabilityError::BadParameter("sample_size"));
    }

    let draws: Vec<(TextStats, bool)> = (0..cfg.iterations)
        .into_par_iter()
        .map(|i| draw_excerpt(corpus, cfg, seed, i))
        .collect();
    let short_excerpts = draws.iter().filter(|d| d.1).count();
    if short_excerpts > 0 {
        log::warn!("{short_excerpts} bootstrap excerpts stayed under {} words", cfg.min_words);
    }
    let fk: Vec<T> = draws.iter().map(|d| flesch_kincaid(&d.0)).collect::<Result<_, _>>()?;
    let fog: Vec<T> = draws.iter().map(|d| gunning_fog(&d.0)).collect::<Result<_, _>>()?;

    let estimate = |metric, values: &[T]| {
        let mean = scalar::mean(values);
        ReadabilityEstimate {
            metric,
            mean,
            std: scalar::population_std(values, mean),
            iterations: cfg.iterations,
            sample_size: cfg.sample_size,
            seed,
        }
    };
    let wc = word_count_stats::<T>(corpus);
    Ok(Bootstrap {
        flesch_kincaid: estimate(ReadabilityMetric::FleschKincaid, &fk),
        gunning_fog: estimate(ReadabilityMetric::GunningFog, &fog),
        word_count: ReadabilityEstimate {
            metric: ReadabilityMetric::WordCount,
            mean: wc.mean,
            std: wc.std,
            iterations: 1,
            sample_size: corpus.len(),
            seed,
        },
        short_excerpts,
    })
}

/// Word counts of the individual texts.
pub fn word_count_stats<T: Scalar>(corpus: &[&str]) -> AggregateStats<T> {
    let counts: Vec<T> = corpus.iter().map(|t| T::of_usize(text::words(t).len())).collect();
    metrics::aggregate(&counts).expect("corpus checked nonempty")
}
