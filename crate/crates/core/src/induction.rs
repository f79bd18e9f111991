//! Hypernym prediction and top-k taxonomy assembly.
//!
//! * `restrict-mlm` fills the mask of `template(t, [MASK])` and ranks only the
//!   vocabulary tokens that spell a single-token term of the terminology.
//! * `prompt-mlm` ranks the whole vocabulary.
//! * `lm-scorer` renders `template(t, t')` for every other term `t'`, scores
//!   each sentence with the model and ranks the candidates by score.
//!
//! Ties are broken lexicographically on the candidate surface.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{mask_fill_logprobs, term_token_ids, LanguageModel, ModelKind, TokenId};
use crate::error::{Error, Result};
use crate::prompts::PromptTemplate;
use crate::scoring::{Normalization, ScoreCache};
use crate::terminology::{Taxonomy, TaxonomyEdge, Term, Terminology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: Term,
    pub log_score: f64,
}

/// Highest score first; equal scores in lexicographic candidate order.
pub fn rank_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.log_score
        .total_cmp(&a.log_score)
        .then_with(|| a.candidate.cmp(&b.candidate))
}

fn top_k(mut candidates: Vec<ScoredCandidate>, k: usize) -> Vec<ScoredCandidate> {
    candidates.retain(|c| c.log_score.is_finite());
    candidates.sort_by(rank_order);
    candidates.truncate(k);
    candidates
}

/// Terms of a terminology that the model can predict with a single token.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabularyMask {
    entries: Vec<(Term, TokenId)>,
    excluded: Vec<Term>,
}

impl VocabularyMask {
    pub fn entries(&self) -> &[(Term, TokenId)] {
        &self.entries
    }

    /// Multi-token terms left out of the mask.
    pub fn excluded(&self) -> &[Term] {
        &self.excluded
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn build_vocab_mask(
    backend: &dyn LanguageModel,
    terminology: &Terminology,
) -> Result<VocabularyMask> {
    require_masked(backend, Method::RestrictMlm)?;
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for (term, id) in term_token_ids(backend, terminology)? {
        match id {
            Some(id) => entries.push((term, id)),
            None => excluded.push(term),
        }
    }
    if entries.is_empty() {
        return Err(Error::Inapplicable {
            method: Method::RestrictMlm.to_string(),
            reason: format!(
                "none of the {} terms is a single token for {}",
                terminology.len(),
                backend.descriptor().name()
            ),
        });
    }
    Ok(VocabularyMask { entries, excluded })
}

fn require_masked(backend: &dyn LanguageModel, method: Method) -> Result<()> {
    if backend.descriptor().kind() != ModelKind::Masked {
        return Err(Error::Inapplicable {
            method: method.to_string(),
            reason: format!("{} is not a masked model", backend.descriptor().name()),
        });
    }
    Ok(())
}

fn masked_distribution(
    backend: &dyn LanguageModel,
    template: &PromptTemplate,
    term: &Term,
) -> Result<Vec<f64>> {
    let mask = backend
        .descriptor()
        .mask_literal()
        .expect("masked descriptor has a mask literal");
    let sentence = template.render_masked(term, mask)?;
    mask_fill_logprobs(backend, &sentence)
}

pub fn retrieve_restricted(
    backend: &dyn LanguageModel,
    template: &PromptTemplate,
    term: &Term,
    mask: &VocabularyMask,
    k: usize,
) -> Result<Vec<ScoredCandidate>> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    require_masked(backend, Method::RestrictMlm)?;
    let dist = masked_distribution(backend, template, term)?;
    let candidates = mask
        .entries
        .iter()
        .filter(|(candidate, _)| candidate != term)
        .map(|(candidate, id)| ScoredCandidate {
            candidate: candidate.clone(),
            log_score: dist[*id as usize],
        })
        .collect();
    Ok(top_k(candidates, k))
}

pub fn retrieve_unrestricted(
    backend: &dyn LanguageModel,
    template: &PromptTemplate,
    term: &Term,
    k: usize,
) -> Result<Vec<ScoredCandidate>> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    require_masked(backend, Method::PromptMlm)?;
    let dist = masked_distribution(backend, template, term)?;
    // Several tokens can spell the same word (e.g. with and without a
    // word-boundary marker); keep the best-scoring one.
    let mut best: HashMap<Term, f64> = HashMap::new();
    for (id, &log_score) in dist.iter().enumerate() {
        let Some(word) = backend.token_word(id as TokenId) else {
            continue;
        };
        let Ok(candidate) = Term::new(&word) else {
            continue;
        };
        if &candidate == term {
            continue;
        }
        best.entry(candidate)
            .and_modify(|s| *s = s.max(log_score))
            .or_insert(log_score);
    }
    let candidates = best
        .into_iter()
        .map(|(candidate, log_score)| ScoredCandidate {
            candidate,
            log_score,
        })
        .collect();
    Ok(top_k(candidates, k))
}

/// Scores `template(term, t')` for every other term `t'` and keeps the best `k`.
pub fn select_scored(
    backend: &dyn LanguageModel,
    template: &PromptTemplate,
    term: &Term,
    terminology: &Terminology,
    k: usize,
) -> Result<Vec<ScoredCandidate>> {
    select_scored_with(
        backend,
        template,
        term,
        terminology,
        k,
        Normalization::None,
        &ScoreCache::new(),
    )
}

pub fn select_scored_with(
    backend: &dyn LanguageModel,
    template: &PromptTemplate,
    term: &Term,
    terminology: &Terminology,
    k: usize,
    normalization: Normalization,
    cache: &ScoreCache,
) -> Result<Vec<ScoredCandidate>> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if terminology.len() < 2 {
        return Err(Error::TerminologyTooSmall(terminology.len()));
    }
    let candidates = terminology
        .iter()
        .filter(|&candidate| candidate != term)
        .map(|candidate| {
            let score = cache.score(backend, &template.render(term, candidate))?;
            Ok(ScoredCandidate {
                candidate: candidate.clone(),
                log_score: score.ranking_value(normalization),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(top_k(candidates, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RestrictMlm,
    PromptMlm,
    LmScorer,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::RestrictMlm => "restrict-mlm",
            Method::PromptMlm => "prompt-mlm",
            Method::LmScorer => "lm-scorer",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.replace('_', "-").to_lowercase().as_str() {
            "restrict-mlm" | "restrictmlm" => Ok(Method::RestrictMlm),
            "prompt-mlm" | "promptmlm" => Ok(Method::PromptMlm),
            "lm-scorer" | "lmscorer" => Ok(Method::LmScorer),
            _ => Err(format!(
                "unknown method `{s}` (expected restrict-mlm, prompt-mlm or lm-scorer)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductionConfig {
    pub method: Method,
    pub template: PromptTemplate,
    pub k: usize,
    #[serde(default)]
    pub normalization: Normalization,
}

impl InductionConfig {
    pub fn new(method: Method, template: PromptTemplate, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroK);
        }
        Ok(InductionConfig {
            method,
            template,
            k,
            normalization: Normalization::None,
        })
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermPrediction {
    pub term: Term,
    pub candidates: Vec<ScoredCandidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedTerm {
    pub term: Term,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct InductionRun {
    pub taxonomy: Taxonomy,
    pub predictions: Vec<TermPrediction>,
    pub skipped: Vec<SkippedTerm>,
    /// Terms the restricted method could never predict (multi-token).
    pub excluded_candidates: Vec<Term>,
}

/// Predicts up to `k` hypernyms for every term of the terminology.
pub fn induce(
    config: &InductionConfig,
    backend: &dyn LanguageModel,
    terminology: &Terminology,
) -> Result<InductionRun> {
    let queries: Vec<Term> = terminology.iter().cloned().collect();
    induce_queries(config, backend, &queries, terminology, &ScoreCache::new())
}

/// Predicts hypernyms for `queries`, drawing candidates from `candidates`.
///
/// Per-term work fans out across threads when the backend allows concurrent
/// calls; the result does not depend on the schedule.
pub fn induce_queries(
    config: &InductionConfig,
    backend: &dyn LanguageModel,
    queries: &[Term],
    candidates: &Terminology,
    cache: &ScoreCache,
) -> Result<InductionRun> {
    if config.k == 0 {
        return Err(Error::ZeroK);
    }
    let mask = match config.method {
        Method::RestrictMlm => Some(build_vocab_mask(backend, candidates)?),
        Method::PromptMlm => {
            require_masked(backend, Method::PromptMlm)?;
            None
        }
        Method::LmScorer => {
            if candidates.len() < 2 {
                return Err(Error::TerminologyTooSmall(candidates.len()));
            }
            None
        }
    };

    let predict = |term: &Term| -> Result<Vec<ScoredCandidate>> {
        match config.method {
            Method::RestrictMlm => retrieve_restricted(
                backend,
                &config.template,
                term,
                mask.as_ref().expect("mask built for restrict-mlm"),
                config.k,
            ),
            Method::PromptMlm => retrieve_unrestricted(backend, &config.template, term, config.k),
            Method::LmScorer => select_scored_with(
                backend,
                &config.template,
                term,
                candidates,
                config.k,
                config.normalization,
                cache,
            ),
        }
    };

    let ranked: Vec<Vec<ScoredCandidate>> = if backend.descriptor().concurrent() {
        queries.par_iter().map(predict).collect::<Result<_>>()?
    } else {
        queries.iter().map(predict).collect::<Result<_>>()?
    };

    let mut taxonomy = Taxonomy::new();
    let mut predictions = Vec::with_capacity(queries.len());
    let mut skipped = Vec::new();
    for (term, candidates) in queries.iter().zip(ranked) {
        if candidates.is_empty() {
            log::debug!("no {} prediction for `{term}`", config.method);
            skipped.push(SkippedTerm {
                term: term.clone(),
                reason: "no candidate hypernym".to_string(),
            });
        }
        for c in &candidates {
            taxonomy.insert(TaxonomyEdge::new(term.clone(), c.candidate.clone())?);
        }
        predictions.push(TermPrediction {
            term: term.clone(),
            candidates,
        });
    }
    if !skipped.is_empty() {
        log::info!("{} term(s) skipped without predictions", skipped.len());
    }
    Ok(InductionRun {
        taxonomy,
        predictions,
        skipped,
        excluded_candidates: mask.map(|m| m.excluded).unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBuilder;
    use crate::prompts::{builtin_templates, lookup};

    fn t(s: &str) -> Term {
        Term::new(s).unwrap()
    }

    fn terms(words: &[&str]) -> Terminology {
        words.iter().map(|w| t(w)).collect()
    }

    fn type_template() -> PromptTemplate {
        lookup(&builtin_templates(), "type").unwrap().clone()
    }

    fn mock() -> crate::backend::MockBackend {
        MockBuilder::new(ModelKind::Masked)
            .words(["plant", "rainbow"])
            .entry("trout is a type of [MASK]", "fish", 0.6)
            .entry("trout is a type of [MASK]", "animal", 0.3)
            .build()
            .unwrap()
    }

    #[test]
    fn mask_construction() {
        let m = mock();
        let mask = build_vocab_mask(&m, &terms(&["fish", "animal", "rainbow trout"])).unwrap();
        assert_eq!(mask.len(), 2);
        assert_eq!(mask.excluded(), &[t("rainbow trout")]);

        let err = build_vocab_mask(&m, &terms(&["zebra", "rainbow trout"])).unwrap_err();
        assert!(matches!(err, Error::Inapplicable { .. }));
    }

    #[test]
    fn restricted_prefers_table_winner() {
        let m = mock();
        let mask = build_vocab_mask(&m, &terms(&["fish", "animal", "trout"])).unwrap();
        let top = retrieve_restricted(&m, &type_template(), &t("trout"), &mask, 1).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].candidate, t("fish"));

        let all = retrieve_restricted(&m, &type_template(), &t("trout"), &mask, 10).unwrap();
        let names: Vec<&str> = all.iter().map(|c| c.candidate.as_str()).collect();
        assert_eq!(names, ["fish", "animal"]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let m = MockBuilder::new(ModelKind::Masked)
            .words(["zebra", "apple", "mango"])
            .build()
            .unwrap();
        let mask = build_vocab_mask(&m, &terms(&["zebra", "apple", "mango"])).unwrap();
        let top = retrieve_restricted(&m, &type_template(), &t("pear"), &mask, 3).unwrap();
        let names: Vec<&str> = top.iter().map(|c| c.candidate.as_str()).collect();
        assert_eq!(names, ["apple", "mango", "zebra"]);
    }

    #[test]
    fn unrestricted_top1_and_size() {
        let m = mock();
        let top = retrieve_unrestricted(&m, &type_template(), &t("trout"), 3).unwrap();
        assert_eq!(top.len(), 3);
        assert_eq!(top[0].candidate, t("fish"));
        assert!(top.iter().all(|c| c.candidate != t("trout")));
        assert!(top.iter().all(|c| c.candidate.as_str() != "[mask]"));
    }

    #[test]
    fn scored_selection_forced_choice() {
        let m = MockBuilder::new(ModelKind::Causal).words(["a", "b", "is", "type", "of"]).build().unwrap();
        let top = select_scored(&m, &type_template(), &t("a"), &terms(&["a", "b"]), 1).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].candidate, t("b"));
        assert!(matches!(
            select_scored(&m, &type_template(), &t("a"), &terms(&["a"]), 1),
            Err(Error::TerminologyTooSmall(1))
        ));
        let top = select_scored(&m, &type_template(), &t("a"), &terms(&["a", "b"]), 5).unwrap();
        assert_eq!(top.len(), 1);
    }

    #[test]
    fn method_backend_mismatch() {
        let causal = MockBuilder::new(ModelKind::Causal).words(["a", "b"]).build().unwrap();
        let cfg = InductionConfig::new(Method::RestrictMlm, type_template(), 1).unwrap();
        assert!(induce(&cfg, &causal, &terms(&["a", "b"])).is_err());
        let cfg = InductionConfig::new(Method::PromptMlm, type_template(), 1).unwrap();
        assert!(induce(&cfg, &causal, &terms(&["a", "b"])).is_err());
        assert!(InductionConfig::new(Method::LmScorer, type_template(), 0).is_err());
    }

    #[test]
    fn skips_terms_without_candidates() {
        let m = mock();
        let cfg = InductionConfig::new(Method::RestrictMlm, type_template(), 1).unwrap();
        // Only `fish` is a single token, so `fish` itself has nothing to predict.
        let run = induce(&cfg, &m, &terms(&["fish", "rainbow trout"])).unwrap();
        assert_eq!(run.skipped.len(), 1);
        assert_eq!(run.skipped[0].term, t("fish"));
        assert_eq!(run.taxonomy.edge_count(), 1);
        assert_eq!(run.excluded_candidates, vec![t("rainbow trout")]);
    }

    #[test]
    fn method_names_parse() {
        for m in [Method::RestrictMlm, Method::PromptMlm, Method::LmScorer] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("lm_scorer".parse::<Method>().unwrap(), Method::LmScorer);
        assert!("other".parse::<Method>().is_err());
    }
}
