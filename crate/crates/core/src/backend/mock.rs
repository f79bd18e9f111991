//! A table-driven language model for exact offline testing.
//!
//! The model is a set of rows, one per context. For a causal mock the context
//! is the whitespace-joined left context of a position (the empty string for
//! the first token). For a masked mock it is the whole sentence with the mask
//! literal at the predicted position. Each row lists `P(token | context)` for
//! some tokens; the remaining mass is spread uniformly over the unlisted
//! vocabulary. Contexts without a row use the `*` row when present, and the
//! uniform distribution otherwise.
//!
//! Table files are tab-separated `context<TAB>token<TAB>probability` lines.
//! `#` starts a comment line and an `@vocab<TAB>w1 w2 ...` line adds
//! vocabulary words that no row mentions.
//!
//! Sentences are split on whitespace; trailing `.,;:!?` characters become
//! tokens of their own.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexSet;

use super::{BackendDescriptor, LanguageModel, ModelKind, TokenId, TokenizedSentence};
use crate::error::{Error, Result};

/// Token standing in for out-of-vocabulary words. Always id 0.
pub const MOCK_UNKNOWN: &str = "[UNK]";

const WILDCARD: &str = "*";

const PUNCTUATION: &[char] = &['.', ',', ';', ':', '!', '?'];

/// Whitespace-separated words, with trailing punctuation split off as
/// tokens of its own.
fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace().flat_map(|w| {
        let stem = w.trim_end_matches(PUNCTUATION);
        let stem = if stem.is_empty() { w } else { stem };
        let tail = &w[stem.len()..];
        std::iter::once(stem).chain(tail.char_indices().map(move |(i, c)| &tail[i..i + c.len_utf8()]))
    })
}

#[derive(Debug, Clone)]
pub struct MockBuilder {
    name: String,
    kind: ModelKind,
    mask_literal: String,
    words: IndexSet<String>,
    entries: Vec<(String, String, f64, usize)>,
    source: Option<PathBuf>,
}

impl MockBuilder {
    pub fn new(kind: ModelKind) -> Self {
        MockBuilder {
            name: format!("mock-{kind}"),
            kind,
            mask_literal: "[MASK]".to_string(),
            words: IndexSet::new(),
            entries: Vec::new(),
            source: None,
        }
    }

    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn mask_literal(mut self, mask: impl Into<String>) -> Self {
        self.mask_literal = mask.into();
        self
    }

    pub fn words<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for w in words {
            self.add_word(w.into());
        }
        self
    }

    fn add_word(&mut self, word: String) {
        if word != self.mask_literal && word != MOCK_UNKNOWN && word != WILDCARD {
            self.words.insert(word);
        }
    }

    /// Adds `P(token | context) = prob`. Words of the context and the token
    /// join the vocabulary.
    pub fn entry(mut self, context: &str, token: &str, prob: f64) -> Self {
        self.push_entry(context, token, prob, 0);
        self
    }

    fn push_entry(&mut self, context: &str, token: &str, prob: f64, line: usize) {
        let words: Vec<String> = words(context).map(str::to_string).collect();
        for w in words {
            self.add_word(w);
        }
        self.add_word(token.to_string());
        self.entries
            .push((context.to_string(), token.to_string(), prob, line));
    }

    pub fn from_tsv(path: impl AsRef<Path>, kind: ModelKind) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut builder = MockBuilder::new(kind);
        builder.source = Some(path.to_path_buf());
        if let Some(stem) = path.file_stem() {
            builder.name = format!("mock-{kind}:{}", stem.to_string_lossy());
        }
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| Error::MockTable {
                path: path.to_path_buf(),
                line: line_no,
                reason,
            };
            let columns: Vec<&str> = line.split('\t').collect();
            if columns[0] == "@vocab" {
                if columns.len() != 2 {
                    return Err(bad("expected `@vocab<TAB>words`".into()));
                }
                for w in columns[1].split_whitespace() {
                    builder.add_word(w.to_string());
                }
                continue;
            }
            let [context, token, prob] = columns.as_slice() else {
                return Err(bad(format!("expected 3 columns, found {}", columns.len())));
            };
            let prob: f64 = prob
                .trim()
                .parse()
                .map_err(|_| bad(format!("`{prob}` is not a probability")))?;
            builder.push_entry(context, token.trim(), prob, line_no);
        }
        Ok(builder)
    }

    pub fn build(self) -> Result<MockBackend> {
        let mut vocabulary = vec![MOCK_UNKNOWN.to_string()];
        let mask_literal = match self.kind {
            ModelKind::Masked => {
                vocabulary.push(self.mask_literal.clone());
                Some(self.mask_literal.clone())
            }
            ModelKind::Causal => None,
        };
        vocabulary.extend(self.words.iter().cloned());
        let descriptor = BackendDescriptor::new(self.name.clone(), self.kind, mask_literal, vocabulary)?
            .with_special_tokens([0])
            .with_concurrency(true);
        let index: HashMap<String, TokenId> = descriptor
            .vocabulary()
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as TokenId))
            .collect();

        let mut mock = MockBackend {
            descriptor,
            index,
            rows: HashMap::new(),
            fallback: None,
        };

        let table_error = |line: usize, reason: String| match &self.source {
            Some(path) => Error::MockTable {
                path: path.clone(),
                line,
                reason,
            },
            None => Error::InvalidBackend(reason),
        };

        let mut grouped: Vec<(Option<Vec<TokenId>>, Vec<(TokenId, f64, usize)>)> = Vec::new();
        let mut slot: HashMap<Option<Vec<TokenId>>, usize> = HashMap::new();
        for (context, token, prob, line) in &self.entries {
            if !(*prob > 0.0 && *prob <= 1.0) {
                return Err(table_error(
                    *line,
                    format!("probability {prob} outside (0, 1]"),
                ));
            }
            let key = if context.trim() == WILDCARD {
                None
            } else {
                let ids = mock.ids(context);
                if self.kind == ModelKind::Masked {
                    let mask = mock.descriptor.mask_id().unwrap();
                    let n = ids.iter().filter(|&&id| id == mask).count();
                    if n != 1 {
                        return Err(table_error(
                            *line,
                            format!("masked context `{context}` must hold exactly one mask"),
                        ));
                    }
                }
                Some(ids)
            };
            let id = mock.index[token.as_str()];
            let pos = *slot.entry(key.clone()).or_insert_with(|| {
                grouped.push((key, Vec::new()));
                grouped.len() - 1
            });
            if grouped[pos].1.iter().any(|(t, _, _)| *t == id) {
                return Err(table_error(
                    *line,
                    format!("duplicate entry for `{token}` in context `{context}`"),
                ));
            }
            grouped[pos].1.push((id, *prob, *line));
        }

        let vocab_size = mock.descriptor.vocab_size();
        for (key, listed) in grouped {
            let line = listed.first().map(|e| e.2).unwrap_or(0);
            let row = normalized_row(vocab_size, &listed).map_err(|r| table_error(line, r))?;
            match key {
                Some(ids) => {
                    mock.rows.insert(ids, row);
                }
                None => mock.fallback = Some(row),
            }
        }
        Ok(mock)
    }
}

fn normalized_row(vocab_size: usize, listed: &[(TokenId, f64, usize)]) -> std::result::Result<Vec<f64>, String> {
    let total: f64 = listed.iter().map(|e| e.1).sum();
    let unlisted = vocab_size - listed.len();
    let mut probs = vec![0.0; vocab_size];
    if unlisted == 0 {
        for &(id, p, _) in listed {
            probs[id as usize] = p / total;
        }
    } else {
        let remainder = 1.0 - total;
        if remainder <= 1e-12 {
            return Err(format!(
                "row leaves no probability mass for {unlisted} unlisted token(s)"
            ));
        }
        let share = remainder / unlisted as f64;
        probs.iter_mut().for_each(|p| *p = share);
        for &(id, p, _) in listed {
            probs[id as usize] = p;
        }
    }
    Ok(probs.into_iter().map(f64::ln).collect())
}

/// A deterministic table-driven model with a whitespace tokenizer.
#[derive(Debug, Clone)]
pub struct MockBackend {
    descriptor: BackendDescriptor,
    index: HashMap<String, TokenId>,
    rows: HashMap<Vec<TokenId>, Vec<f64>>,
    fallback: Option<Vec<f64>>,
}

impl MockBackend {
    fn ids(&self, text: &str) -> Vec<TokenId> {
        words(text)
            .map(|w| self.index.get(w).copied().unwrap_or(0))
            .collect()
    }

    pub fn token_id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    fn row(&self, context: &[TokenId]) -> Vec<f64> {
        match self.rows.get(context).or(self.fallback.as_ref()) {
            Some(row) => row.clone(),
            None => {
                let n = self.descriptor.vocab_size();
                vec![(1.0 / n as f64).ln(); n]
            }
        }
    }
}

impl LanguageModel for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, sentence: &str) -> Result<TokenizedSentence> {
        TokenizedSentence::new(self.ids(sentence), sentence, self.descriptor.vocab_size())
    }

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String> {
        let words: Vec<&str> = tokens
            .iter()
            .map(|&id| self.descriptor.token(id).ok_or(Error::InvalidTokenId(id)))
            .collect::<Result<_>>()?;
        Ok(words.join(" "))
    }

    fn fill_mask(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        let Some(mask) = self.descriptor.mask_id() else {
            return Err(Error::Unsupported {
                backend: self.descriptor.name().to_string(),
                capability: "mask filling",
            });
        };
        let found = tokens.iter().filter(|&&id| id == mask).count();
        if found != 1 {
            return Err(Error::MaskCount {
                mask: self.descriptor.mask_literal().unwrap_or_default().to_string(),
                sentence: self.detokenize(tokens)?,
                found,
            });
        }
        Ok(self.row(tokens))
    }

    fn causal_logprobs(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        if self.descriptor.kind() != ModelKind::Causal {
            return Err(Error::Unsupported {
                backend: self.descriptor.name().to_string(),
                capability: "causal scoring",
            });
        }
        Ok((0..tokens.len())
            .map(|i| self.row(&tokens[..i])[tokens[i] as usize])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{
        mask_fill_logprobs, term_token_ids, token_logprob_causal, token_logprob_masked,
    };
    use crate::terminology::{Term, Terminology};

    fn masked_fixture() -> MockBackend {
        MockBuilder::new(ModelKind::Masked)
            .words(["plant"])
            .entry("trout is a type of [MASK]", "fish", 0.6)
            .entry("trout is a type of [MASK]", "animal", 0.3)
            .build()
            .unwrap()
    }

    #[test]
    fn mask_fill_is_normalized_and_favors_table() {
        let mock = masked_fixture();
        let dist = mask_fill_logprobs(&mock, "trout is a type of [MASK]").unwrap();
        assert_eq!(dist.len(), mock.descriptor().vocab_size());
        let total: f64 = dist.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-4);
        let argmax = (0..dist.len())
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            .unwrap();
        assert_eq!(mock.descriptor().token(argmax as TokenId), Some("fish"));
        assert_eq!(dist[mock.token_id("fish").unwrap() as usize], 0.6f64.ln());
    }

    #[test]
    fn mask_count_errors() {
        let mock = masked_fixture();
        assert!(matches!(
            mask_fill_logprobs(&mock, "trout is a type of fish"),
            Err(Error::MaskCount { found: 0, .. })
        ));
        assert!(matches!(
            mask_fill_logprobs(&mock, "[MASK] is a type of [MASK]"),
            Err(Error::MaskCount { found: 2, .. })
        ));
        let causal = MockBuilder::new(ModelKind::Causal).words(["a"]).build().unwrap();
        assert!(matches!(
            mask_fill_logprobs(&causal, "a"),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn uniform_causal() {
        let mock = MockBuilder::new(ModelKind::Causal)
            .words(["a", "b", "c"])
            .build()
            .unwrap();
        assert_eq!(mock.descriptor().vocab_size(), 4);
        let s = mock.tokenize("a b c").unwrap();
        for i in 0..3 {
            assert_eq!(token_logprob_causal(&mock, &s, i).unwrap(), 0.25f64.ln());
        }
        assert!(matches!(
            token_logprob_causal(&mock, &s, 3),
            Err(Error::PositionOutOfRange { position: 3, len: 3 })
        ));
    }

    #[test]
    fn causal_table_lookup() {
        let mock = MockBuilder::new(ModelKind::Causal)
            .entry("", "x", 0.4)
            .entry("x y", "z", 0.5)
            .build()
            .unwrap();
        let s = mock.tokenize("x y z").unwrap();
        assert_eq!(token_logprob_causal(&mock, &s, 0).unwrap(), 0.4f64.ln());
        assert_eq!(token_logprob_causal(&mock, &s, 2).unwrap(), 0.5f64.ln());
        // Unlisted context: uniform over [UNK], x, y, z.
        assert_eq!(token_logprob_causal(&mock, &s, 1).unwrap(), 0.25f64.ln());
    }

    #[test]
    fn masked_token_logprob_reads_mask_fill() {
        let mock = MockBuilder::new(ModelKind::Masked)
            .entry("[MASK] b c d e", "a", 0.7)
            .entry("a b [MASK] d e", "c", 0.2)
            .build()
            .unwrap();
        let s = mock.tokenize("a b c d e").unwrap();
        assert_eq!(token_logprob_masked(&mock, &s, 0).unwrap(), 0.7f64.ln());
        assert_eq!(token_logprob_masked(&mock, &s, 2).unwrap(), 0.2f64.ln());
        for i in 0..5 {
            let value = token_logprob_masked(&mock, &s, i).unwrap();
            assert!(value.is_finite() && value <= 0.0);
            let mut words: Vec<&str> = "a b c d e".split(' ').collect();
            let original = words[i];
            words[i] = "[MASK]";
            let dist = mask_fill_logprobs(&mock, &words.join(" ")).unwrap();
            assert_eq!(value, dist[mock.token_id(original).unwrap() as usize]);
        }
        let all = mock.masked_logprobs(s.tokens()).unwrap();
        assert_eq!(all[0], 0.7f64.ln());
        assert!(token_logprob_masked(&mock, &s, 5).is_err());
    }

    #[test]
    fn tokenizer_round_trip() {
        let mock = masked_fixture();
        assert!(mock.tokenize("").unwrap().is_empty());
        assert_eq!(mock.tokenize("fish animal").unwrap().len(), 2);
        let once = mock
            .detokenize(mock.tokenize("fish  zebra\tplant").unwrap().tokens())
            .unwrap();
        assert_eq!(once, "fish [UNK] plant");
        let twice = mock.detokenize(mock.tokenize(&once).unwrap().tokens()).unwrap();
        assert_eq!(once, twice);
        let ids = mock.tokenize("fish, plant.").unwrap();
        assert_eq!(ids.len(), 4);
        assert_eq!(mock.tokenize("...").unwrap().len(), 1);
    }

    #[test]
    fn single_token_terms() {
        let mock = masked_fixture();
        let terms: Terminology = ["fish", "rainbow trout", "zebra"]
            .iter()
            .map(|s| Term::new(s).unwrap())
            .collect();
        let ids = term_token_ids(&mock, &terms).unwrap();
        assert_eq!(ids[&Term::new("fish").unwrap()], mock.token_id("fish"));
        assert_eq!(ids[&Term::new("rainbow trout").unwrap()], None);
        assert_eq!(ids[&Term::new("zebra").unwrap()], None);
        assert!(term_token_ids(&mock, &Terminology::new()).unwrap().is_empty());
    }

    #[test]
    fn custom_mask_literal() {
        let mock = MockBuilder::new(ModelKind::Masked)
            .mask_literal("<mask>")
            .entry("oak is a type of <mask>", "tree", 0.9)
            .build()
            .unwrap();
        let dist = mask_fill_logprobs(&mock, "oak is a type of <mask>").unwrap();
        assert_eq!(dist[mock.token_id("tree").unwrap() as usize], 0.9f64.ln());
    }

    #[test]
    fn table_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.tsv");
        fs::write(
            &path,
            "# fixture\n@vocab\tplant tree\ntrout is a type of [MASK]\tfish\t0.5\n*\tanimal\t0.5\n",
        )
        .unwrap();
        let mock = MockBuilder::from_tsv(&path, ModelKind::Masked)
            .unwrap()
            .build()
            .unwrap();
        assert!(mock.token_id("tree").is_some());
        let other = mask_fill_logprobs(&mock, "oak is a type of [MASK]").unwrap();
        assert_eq!(other[mock.token_id("animal").unwrap() as usize], 0.5f64.ln());

        fs::write(&path, "a [MASK]\tb\t1.5\n").unwrap();
        let err = MockBuilder::from_tsv(&path, ModelKind::Masked)
            .unwrap()
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::MockTable { line: 1, .. }));

        fs::write(&path, "a [MASK]\tb\n").unwrap();
        assert!(MockBuilder::from_tsv(&path, ModelKind::Masked).is_err());

        fs::write(&path, "a b\tc\t0.5\n").unwrap();
        assert!(MockBuilder::from_tsv(&path, ModelKind::Masked)
            .unwrap()
            .build()
            .is_err());
    }

    #[test]
    fn deterministic_across_builds() {
        let a = masked_fixture();
        let b = masked_fixture();
        let s = "trout is a type of [MASK]";
        let da = mask_fill_logprobs(&a, s).unwrap();
        let db = mask_fill_logprobs(&b, s).unwrap();
        assert_eq!(
            da.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            db.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
