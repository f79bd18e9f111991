//! Language-model backends.
//!
//! The induction and scoring code only needs two capabilities: a log-probability
//! distribution over the vocabulary at a single masked position (masked models),
//! and per-token conditional log-probabilities given the left context (causal
//! models). Both are exposed through [`LanguageModel`].

mod mock;

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terminology::{Term, Terminology};

pub use mock::{MockBackend, MockBuilder, MOCK_UNKNOWN};

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Masked,
    Causal,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Masked => "masked",
            ModelKind::Causal => "causal",
        })
    }
}

#[derive(Debug, Clone)]
pub struct BackendDescriptor {
    name: String,
    kind: ModelKind,
    mask_literal: Option<String>,
    mask_id: Option<TokenId>,
    vocabulary: Vec<String>,
    special: Vec<TokenId>,
    concurrent: bool,
}

impl BackendDescriptor {
    /// Validates the descriptor invariants: a non-empty duplicate-free
    /// vocabulary, and a mask literal from that vocabulary iff the model is
    /// masked.
    pub fn new(
        name: impl Into<String>,
        kind: ModelKind,
        mask_literal: Option<String>,
        vocabulary: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        if vocabulary.is_empty() {
            return Err(Error::InvalidBackend(format!("{name}: empty vocabulary")));
        }
        let mut seen = HashMap::with_capacity(vocabulary.len());
        for (id, token) in vocabulary.iter().enumerate() {
            if seen.insert(token.as_str(), id).is_some() {
                return Err(Error::InvalidBackend(format!(
                    "{name}: duplicate vocabulary token `{token}`"
                )));
            }
        }
        let mask_id = match (kind, &mask_literal) {
            (ModelKind::Masked, Some(mask)) => match seen.get(mask.as_str()) {
                Some(&id) => Some(id as TokenId),
                None => {
                    return Err(Error::InvalidBackend(format!(
                        "{name}: mask literal `{mask}` is not in the vocabulary"
                    )))
                }
            },
            (ModelKind::Masked, None) => {
                return Err(Error::InvalidBackend(format!(
                    "{name}: masked model without a mask literal"
                )))
            }
            (ModelKind::Causal, Some(_)) => {
                return Err(Error::InvalidBackend(format!(
                    "{name}: causal model with a mask literal"
                )))
            }
            (ModelKind::Causal, None) => None,
        };
        Ok(BackendDescriptor {
            name,
            kind,
            mask_literal,
            mask_id,
            vocabulary,
            special: mask_id.into_iter().collect(),
            concurrent: false,
        })
    }

    /// Tokens that never stand for a word (mask, padding, delimiters...).
    pub fn with_special_tokens(mut self, ids: impl IntoIterator<Item = TokenId>) -> Self {
        self.special.extend(ids);
        self.special.sort_unstable();
        self.special.dedup();
        self
    }

    /// Declares the backend safe for concurrent scoring calls.
    pub fn with_concurrency(mut self, concurrent: bool) -> Self {
        self.concurrent = concurrent;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn mask_literal(&self) -> Option<&str> {
        self.mask_literal.as_deref()
    }

    pub fn mask_id(&self) -> Option<TokenId> {
        self.mask_id
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.vocabulary.get(id as usize).map(String::as_str)
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.special.binary_search(&id).is_ok()
    }

    pub fn concurrent(&self) -> bool {
        self.concurrent
    }

    fn require(&self, kind: ModelKind, capability: &'static str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Unsupported {
                backend: self.name.clone(),
                capability,
            })
        }
    }
}

/// Token ids of a sentence, without any sequence delimiters the model adds
/// around it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSentence {
    tokens: Vec<TokenId>,
    text: String,
}

impl TokenizedSentence {
    pub fn new(tokens: Vec<TokenId>, text: impl Into<String>, vocab_size: usize) -> Result<Self> {
        if let Some(&bad) = tokens.iter().find(|&&id| id as usize >= vocab_size) {
            return Err(Error::InvalidTokenId(bad));
        }
        Ok(TokenizedSentence {
            tokens,
            text: text.into(),
        })
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub trait LanguageModel: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn tokenize(&self, sentence: &str) -> Result<TokenizedSentence>;

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String>;

    /// Log-probabilities over the vocabulary at the single mask position of
    /// `tokens`.
    fn fill_mask(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        let _ = tokens;
        Err(Error::Unsupported {
            backend: self.descriptor().name().to_string(),
            capability: "mask filling",
        })
    }

    /// `log P(w_i | w_<i)` for every position `i`.
    fn causal_logprobs(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        let _ = tokens;
        Err(Error::Unsupported {
            backend: self.descriptor().name().to_string(),
            capability: "causal scoring",
        })
    }

    /// `log P(w_i | W without w_i)` for every position `i`, masking one
    /// position at a time. Adapters may batch this.
    fn masked_logprobs(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        let mask = self.descriptor().mask_id().ok_or_else(|| Error::Unsupported {
            backend: self.descriptor().name().to_string(),
            capability: "mask filling",
        })?;
        let mut scratch = tokens.to_vec();
        let mut out = Vec::with_capacity(tokens.len());
        for (i, &original) in tokens.iter().enumerate() {
            scratch[i] = mask;
            let dist = self.fill_mask(&scratch)?;
            scratch[i] = original;
            out.push(dist[original as usize]);
        }
        Ok(out)
    }

    /// The vocabulary token spelling `surface` as a single word, if any.
    fn word_token(&self, surface: &str) -> Result<Option<TokenId>> {
        let tokenized = self.tokenize(surface)?;
        Ok(match tokenized.tokens() {
            [id] if !self.descriptor().is_special(*id) => Some(*id),
            _ => None,
        })
    }

    /// Word form of a token with subword markers removed; `None` for special
    /// tokens.
    fn token_word(&self, id: TokenId) -> Option<String> {
        let descriptor = self.descriptor();
        if descriptor.is_special(id) {
            return None;
        }
        descriptor.token(id).map(str::to_string)
    }
}

pub fn tokenize(backend: &dyn LanguageModel, sentence: &str) -> Result<TokenizedSentence> {
    backend.tokenize(sentence)
}

/// Distribution at the mask of a sentence containing exactly one mask literal.
pub fn mask_fill_logprobs(backend: &dyn LanguageModel, sentence: &str) -> Result<Vec<f64>> {
    let descriptor = backend.descriptor();
    descriptor.require(ModelKind::Masked, "mask filling")?;
    let mask = descriptor.mask_id().expect("masked descriptor has a mask id");
    let tokenized = backend.tokenize(sentence)?;
    let found = tokenized.tokens().iter().filter(|&&id| id == mask).count();
    if found != 1 {
        return Err(Error::MaskCount {
            mask: descriptor.mask_literal().unwrap_or_default().to_string(),
            sentence: sentence.to_string(),
            found,
        });
    }
    backend.fill_mask(tokenized.tokens())
}

fn check_position(tokens: &TokenizedSentence, position: usize) -> Result<()> {
    if position >= tokens.len() {
        return Err(Error::PositionOutOfRange {
            position,
            len: tokens.len(),
        });
    }
    Ok(())
}

/// `log P(w_i | w_<i)`; position 0 is conditioned on the empty context.
pub fn token_logprob_causal(
    backend: &dyn LanguageModel,
    tokens: &TokenizedSentence,
    position: usize,
) -> Result<f64> {
    backend
        .descriptor()
        .require(ModelKind::Causal, "causal scoring")?;
    check_position(tokens, position)?;
    Ok(backend.causal_logprobs(tokens.tokens())?[position])
}

/// `log P(w_i | W without w_i)`, computed by masking position `i` and reading
/// the original token's entry of the mask-fill distribution.
pub fn token_logprob_masked(
    backend: &dyn LanguageModel,
    tokens: &TokenizedSentence,
    position: usize,
) -> Result<f64> {
    let descriptor = backend.descriptor();
    descriptor.require(ModelKind::Masked, "mask filling")?;
    check_position(tokens, position)?;
    let mut masked = tokens.tokens().to_vec();
    let original = masked[position];
    masked[position] = descriptor.mask_id().expect("masked descriptor has a mask id");
    Ok(backend.fill_mask(&masked)?[original as usize])
}

/// Maps each term to its single vocabulary token, or `None` when its surface
/// needs several tokens.
pub fn term_token_ids(
    backend: &dyn LanguageModel,
    terminology: &Terminology,
) -> Result<IndexMap<Term, Option<TokenId>>> {
    terminology
        .iter()
        .map(|term| Ok((term.clone(), backend.word_token(term.as_str())?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn descriptor_invariants() {
        assert!(BackendDescriptor::new("m", ModelKind::Masked, None, vocab(&["a"])).is_err());
        assert!(BackendDescriptor::new(
            "m",
            ModelKind::Masked,
            Some("[MASK]".into()),
            vocab(&["a"])
        )
        .is_err());
        assert!(BackendDescriptor::new(
            "c",
            ModelKind::Causal,
            Some("[MASK]".into()),
            vocab(&["[MASK]"])
        )
        .is_err());
        assert!(BackendDescriptor::new("c", ModelKind::Causal, None, vec![]).is_err());
        assert!(BackendDescriptor::new("c", ModelKind::Causal, None, vocab(&["a", "a"])).is_err());

        let d = BackendDescriptor::new(
            "m",
            ModelKind::Masked,
            Some("[MASK]".into()),
            vocab(&["a", "[MASK]"]),
        )
        .unwrap();
        assert_eq!(d.mask_id(), Some(1));
        assert!(d.is_special(1));
        assert!(!d.is_special(0));
    }

    #[test]
    fn tokenized_sentence_checks_ids() {
        assert!(TokenizedSentence::new(vec![0, 3], "x", 3).is_err());
        assert_eq!(TokenizedSentence::new(vec![0, 2], "x", 3).unwrap().len(), 2);
    }
}
