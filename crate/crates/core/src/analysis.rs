//! Diagnostics: how much of a gold taxonomy is reachable with single-token
//! predictions, and how often prompt patterns occur in a text corpus.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use aho_corasick::{AhoCorasick, MatchKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::LanguageModel;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EdgeMetrics};
use crate::induction::{induce, InductionConfig};
use crate::terminology::{Taxonomy, Term, Terminology};

#[derive(Debug, Clone)]
pub struct SingleTokenFilter {
    /// Gold edges whose hyponym has only single-token hypernyms.
    pub gold: Taxonomy,
    pub total_terms: usize,
    pub kept_terms: usize,
    pub retained_pct: f64,
    /// Hyponyms with at least one multi-token hypernym.
    pub dropped: BTreeSet<Term>,
}

pub fn filter_single_token(backend: &dyn LanguageModel, gold: &Taxonomy) -> Result<SingleTokenFilter> {
    let mut single: HashMap<&Term, bool> = HashMap::new();
    for edge in gold.edges() {
        if !single.contains_key(edge.hypernym()) {
            let ok = backend.word_token(edge.hypernym().as_str())?.is_some();
            single.insert(edge.hypernym(), ok);
        }
    }
    let hyponyms = gold.hyponyms();
    let dropped: BTreeSet<Term> = hyponyms
        .iter()
        .filter(|&&h| gold.hypernyms_of(h).any(|hyper| !single[hyper]))
        .map(|&h| h.clone())
        .collect();
    let mut filtered = gold.clone();
    filtered.retain(|e| !dropped.contains(e.hyponym()));
    let total_terms = hyponyms.len();
    let kept_terms = total_terms - dropped.len();
    let retained_pct = if total_terms == 0 {
        0.0
    } else {
        100.0 * kept_terms as f64 / total_terms as f64
    };
    Ok(SingleTokenFilter {
        gold: filtered,
        total_terms,
        kept_terms,
        retained_pct,
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleTokenReport {
    pub total_terms: usize,
    pub kept_terms: usize,
    pub retained_pct: f64,
    pub original: EdgeMetrics,
    pub filtered: EdgeMetrics,
    pub f_original: f64,
    pub f_filtered: f64,
    /// `f_filtered - f_original`, in points.
    pub increase_pct: f64,
}

/// Induces over the full terminology, then compares the score on the full
/// gold with the score on the single-token part of it.
///
/// The filtered run queries every term except the dropped hyponyms and keeps
/// the full terminology as the candidate set. Predictions are per-term and
/// independent of the other queries, so it reuses the full run's output.
pub fn single_token_report(
    backend: &dyn LanguageModel,
    config: &InductionConfig,
    terminology: &Terminology,
    gold: &Taxonomy,
) -> Result<SingleTokenReport> {
    let filter = filter_single_token(backend, gold)?;
    let run = induce(config, backend, terminology)?;
    let original = evaluate(&run.taxonomy, gold)?;
    let mut predicted = run.taxonomy;
    predicted.retain(|e| !filter.dropped.contains(e.hyponym()));
    let filtered = evaluate(&predicted, &filter.gold)?;
    Ok(SingleTokenReport {
        total_terms: filter.total_terms,
        kept_terms: filter.kept_terms,
        retained_pct: filter.retained_pct,
        original,
        filtered,
        f_original: original.f_score,
        f_filtered: filtered.f_score,
        increase_pct: filtered.f_score - original.f_score,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptFrequency {
    pub pattern: String,
    pub count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_f: Option<f64>,
}

/// Lowercases and collapses whitespace runs to single spaces.
pub fn normalize_text(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Case-insensitive, whitespace-normalized substring counter. Overlapping
/// occurrences are counted at every start offset.
pub struct FrequencyCounter {
    matcher: AhoCorasick,
    /// Pattern index -> index into the deduplicated automaton patterns.
    slots: Vec<usize>,
    n_unique: usize,
    max_len: usize,
}

const CHUNK_BYTES: usize = 1 << 16;

impl FrequencyCounter {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self> {
        let mut unique: Vec<String> = Vec::new();
        let mut slots = Vec::with_capacity(patterns.len());
        for p in patterns {
            let normalized = normalize_text(p.as_ref());
            if normalized.is_empty() {
                return Err(Error::EmptyPattern);
            }
            let slot = match unique.iter().position(|u| *u == normalized) {
                Some(i) => i,
                None => {
                    unique.push(normalized);
                    unique.len() - 1
                }
            };
            slots.push(slot);
        }
        let max_len = unique.iter().map(String::len).max().unwrap_or(0);
        let matcher = AhoCorasick::builder()
            .match_kind(MatchKind::Standard)
            .build(&unique)
            .map_err(|e| Error::Backend(format!("pattern automaton: {e}")))?;
        Ok(FrequencyCounter {
            matcher,
            slots,
            n_unique: unique.len(),
            max_len,
        })
    }

    fn expand(&self, unique_counts: &[u64]) -> Vec<u64> {
        self.slots.iter().map(|&s| unique_counts[s]).collect()
    }

    pub fn count_text(&self, text: &str) -> Vec<u64> {
        let mut counts = vec![0; self.n_unique];
        for m in self.matcher.find_overlapping_iter(&normalize_text(text)) {
            counts[m.pattern().as_usize()] += 1;
        }
        self.expand(&counts)
    }

    /// Streams `reader` in bounded memory. Line breaks count as whitespace,
    /// so patterns match across them.
    pub fn count_reader(&self, reader: impl BufRead) -> std::io::Result<Vec<u64>> {
        let mut counts = vec![0u64; self.n_unique];
        let mut buf = String::new();
        // Prefix of `buf` already scanned; matches ending inside it were counted.
        let mut carry = 0usize;
        let flush = |buf: &mut String, carry: &mut usize, counts: &mut [u64]| {
            for m in self.matcher.find_overlapping_iter(buf.as_str()) {
                if m.end() > *carry {
                    counts[m.pattern().as_usize()] += 1;
                }
            }
            let mut start = buf.len().saturating_sub(self.max_len.saturating_sub(1));
            while !buf.is_char_boundary(start) {
                start -= 1;
            }
            buf.drain(..start);
            *carry = buf.len();
        };
        for line in reader.lines() {
            let line = line?.to_lowercase();
            for word in line.split_whitespace() {
                if !buf.is_empty() {
                    buf.push(' ');
                }
                buf.push_str(word);
            }
            if buf.len() >= CHUNK_BYTES {
                flush(&mut buf, &mut carry, &mut counts);
            }
        }
        flush(&mut buf, &mut carry, &mut counts);
        Ok(self.expand(&counts))
    }

    pub fn count_file(&self, path: &Path) -> Result<Vec<u64>> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        self.count_reader(BufReader::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

/// Counts each pattern over all corpus files. Files are counted in parallel
/// and summed; matches never span two files.
pub fn count_prompt_frequency<S: AsRef<str>>(
    corpus: &[PathBuf],
    patterns: &[S],
) -> Result<Vec<PromptFrequency>> {
    let counter = FrequencyCounter::new(patterns)?;
    let per_file = corpus
        .par_iter()
        .map(|path| counter.count_file(path))
        .collect::<Result<Vec<_>>>()?;
    let mut totals = vec![0u64; patterns.len()];
    for counts in per_file {
        for (total, c) in totals.iter_mut().zip(counts) {
            *total += c;
        }
    }
    Ok(patterns
        .iter()
        .zip(totals)
        .map(|(p, count)| PromptFrequency {
            pattern: p.as_ref().to_string(),
            count,
            avg_f: None,
        })
        .collect())
}
