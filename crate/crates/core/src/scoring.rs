//! Sentence log-likelihoods: left-to-right for causal models, pseudo-log-
//! likelihood (one masked prediction per position) for masked models.
//!
//! Scores stay in log space. The probability form is `exp(log_score)`, and
//! since `exp` is monotonic every ranking is done on `log_score` directly.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backend::{LanguageModel, ModelKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    /// Sum of per-token log-probabilities.
    pub log_score: f64,
    pub n_tokens: usize,
}

impl SentenceScore {
    /// Sentence probability, `exp(log_score)`.
    pub fn probability(&self) -> f64 {
        self.log_score.exp()
    }

    /// The value candidates are ranked by.
    pub fn ranking_value(&self, normalization: Normalization) -> f64 {
        match normalization {
            Normalization::None => self.log_score,
            Normalization::PerToken => self.log_score / self.n_tokens.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Plain sum of token log-probabilities.
    #[default]
    None,
    /// Mean token log-probability.
    PerToken,
}

fn tokens_for(backend: &dyn LanguageModel, sentence: &str) -> Result<Vec<u32>> {
    let tokenized = backend.tokenize(sentence)?;
    if tokenized.is_empty() {
        return Err(Error::EmptySentence);
    }
    Ok(tokenized.tokens().to_vec())
}

fn require(backend: &dyn LanguageModel, kind: ModelKind, capability: &'static str) -> Result<()> {
    if backend.descriptor().kind() != kind {
        return Err(Error::Unsupported {
            backend: backend.descriptor().name().to_string(),
            capability,
        });
    }
    Ok(())
}

pub fn score_causal(backend: &dyn LanguageModel, sentence: &str) -> Result<SentenceScore> {
    require(backend, ModelKind::Causal, "causal scoring")?;
    let tokens = tokens_for(backend, sentence)?;
    let per_token = backend.causal_logprobs(&tokens)?;
    Ok(SentenceScore {
        log_score: per_token.iter().sum(),
        n_tokens: tokens.len(),
    })
}

pub fn score_masked(backend: &dyn LanguageModel, sentence: &str) -> Result<SentenceScore> {
    require(backend, ModelKind::Masked, "pseudo-log-likelihood scoring")?;
    let tokens = tokens_for(backend, sentence)?;
    let per_token = backend.masked_logprobs(&tokens)?;
    Ok(SentenceScore {
        log_score: per_token.iter().sum(),
        n_tokens: tokens.len(),
    })
}

/// Scores with whichever method matches the backend kind.
pub fn score_sentence(backend: &dyn LanguageModel, sentence: &str) -> Result<SentenceScore> {
    match backend.descriptor().kind() {
        ModelKind::Causal => score_causal(backend, sentence),
        ModelKind::Masked => score_masked(backend, sentence),
    }
}

/// Memoized sentence scores for one backend.
///
/// Keyed by the rendered sentence, which is determined by the (template,
/// hyponym, candidate) triple. Share one cache across runs only when they use
/// the same backend.
#[derive(Debug, Default)]
pub struct ScoreCache {
    scores: Mutex<HashMap<String, SentenceScore>>,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn score(&self, backend: &dyn LanguageModel, sentence: &str) -> Result<SentenceScore> {
        if let Some(hit) = self.scores.lock().unwrap().get(sentence) {
            return Ok(*hit);
        }
        let score = score_sentence(backend, sentence)?;
        self.scores
            .lock()
            .unwrap()
            .insert(sentence.to_string(), score);
        Ok(score)
    }

    pub fn len(&self) -> usize {
        self.scores.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
