//! Pretrained transformer backends: BERT and RoBERTa masked models and
//! GPT-2 causal models, run on the CPU with candle.
//!
//! A model directory holds `config.json`, `model.safetensors` and a
//! `tokenizer.json` in the format of the `tokenizers` library. Directories
//! are found by [`resolve_model_dir`].

mod encoder;
mod gpt2;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use candle_nn::VarBuilder;
use serde::Deserialize;
use taxoprompt::backend::{BackendDescriptor, LanguageModel, ModelKind, TokenId, TokenizedSentence};
use tokenizers::Tokenizer;

use encoder::{EncoderConfig, Layout, MaskedLm};
use gpt2::{CausalLm, Gpt2Config};

/// Environment variable naming the directory that holds model directories.
pub const MODEL_DIR_ENV: &str = "TAXOPROMPT_MODEL_DIR";

/// Rows per forward pass when masking every position of a sentence.
const MASK_BATCH: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("model `{name}` not found (looked in {})", display_paths(.searched))]
    NotFound { name: String, searched: Vec<PathBuf> },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", .path.display())]
    Config {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("unsupported model type `{0}` (expected bert, roberta or gpt2)")]
    UnsupportedModel(String),
    #[error("{}: {reason}", .path.display())]
    Tokenizer { path: PathBuf, reason: String },
    #[error("{}: {source}", .path.display())]
    Weights {
        path: PathBuf,
        source: candle_core::Error,
    },
    #[error("{0}")]
    Inconsistent(String),
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl From<LoadError> for taxoprompt::Error {
    fn from(e: LoadError) -> Self {
        taxoprompt::Error::Backend(e.to_string())
    }
}

/// Candidate directories for a model, in lookup order: `name` itself when
/// it is a path, then `$TAXOPROMPT_MODEL_DIR/name`, then
/// `~/.cache/taxoprompt/models/name`.
pub fn model_dir_candidates(name: &str) -> Vec<PathBuf> {
    let mut out = vec![PathBuf::from(name)];
    if let Some(root) = std::env::var_os(MODEL_DIR_ENV) {
        out.push(Path::new(&root).join(name));
    }
    if let Some(home) = std::env::var_os("HOME") {
        out.push(Path::new(&home).join(".cache/taxoprompt/models").join(name));
    }
    out
}

pub fn resolve_model_dir(name: &str) -> Result<PathBuf, LoadError> {
    resolve_dir_with(name, "config.json")
}

fn resolve_dir_with(name: &str, marker: &str) -> Result<PathBuf, LoadError> {
    let candidates = model_dir_candidates(name);
    candidates
        .iter()
        .find(|dir| dir.join(marker).is_file())
        .cloned()
        .ok_or_else(|| LoadError::NotFound {
            name: name.to_string(),
            searched: candidates,
        })
}

/// Resolves and loads a model by name or path.
pub fn load(name: &str) -> Result<PretrainedModel, LoadError> {
    PretrainedModel::from_dir(&resolve_model_dir(name)?, name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(try_from = "String")]
pub enum Activation {
    #[default]
    GeluErf,
    GeluTanh,
    Relu,
}

impl TryFrom<String> for Activation {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        match s.as_str() {
            "gelu" => Ok(Activation::GeluErf),
            "gelu_new" | "gelu_pytorch_tanh" | "gelu_fast" => Ok(Activation::GeluTanh),
            "relu" => Ok(Activation::Relu),
            other => Err(format!("unsupported activation `{other}`")),
        }
    }
}

impl Activation {
    fn apply(self, xs: &Tensor) -> candle_core::Result<Tensor> {
        match self {
            Activation::GeluErf => xs.gelu_erf(),
            Activation::GeluTanh => xs.gelu(),
            Activation::Relu => xs.relu(),
        }
    }
}

#[derive(Deserialize)]
struct ModelType {
    model_type: String,
}

enum Network {
    Encoder {
        model: MaskedLm,
        open: TokenId,
        close: TokenId,
    },
    Decoder {
        model: CausalLm,
        bos: TokenId,
    },
}

pub struct PretrainedModel {
    descriptor: BackendDescriptor,
    tokenizer: Tokenizer,
    network: Network,
    /// Byte-level BPE vocabularies spell word-initial tokens with a leading
    /// space marker.
    space_prefixed: bool,
    device: Device,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| LoadError::Config {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads the weights, converting to f32 and harmonizing legacy names.
fn load_weights(path: &Path, device: &Device) -> Result<HashMap<String, Tensor>, LoadError> {
    let raw = candle_core::safetensors::load(path, device).map_err(|source| LoadError::Weights {
        path: path.to_path_buf(),
        source,
    })?;
    raw.into_iter()
        .map(|(name, tensor)| {
            let name = if let Some(stem) = name.strip_suffix(".gamma") {
                format!("{stem}.weight")
            } else if let Some(stem) = name.strip_suffix(".beta") {
                format!("{stem}.bias")
            } else {
                name
            };
            let name = name.strip_prefix("transformer.").map(str::to_string).unwrap_or(name);
            let tensor = tensor.to_dtype(DType::F32).map_err(|source| LoadError::Weights {
                path: path.to_path_buf(),
                source,
            })?;
            Ok((name, tensor))
        })
        .collect()
}

/// Special token literal from `tokenizer_config.json`, if it names one.
fn configured_token(dir: &Path, key: &str) -> Option<String> {
    let config: serde_json::Value = read_json(&dir.join("tokenizer_config.json")).ok()?;
    match config.get(key)? {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Object(o) => o.get("content")?.as_str().map(str::to_string),
        _ => None,
    }
}

fn find_token(
    tokenizer: &Tokenizer,
    dir: &Path,
    key: &str,
    fallbacks: &[&str],
) -> Result<(String, TokenId), LoadError> {
    configured_token(dir, key)
        .into_iter()
        .chain(fallbacks.iter().map(|s| s.to_string()))
        .find_map(|literal| tokenizer.token_to_id(&literal).map(|id| (literal, id)))
        .ok_or_else(|| LoadError::Inconsistent(format!("tokenizer has no {key}")))
}

impl PretrainedModel {
    pub fn from_dir(dir: &Path, name: &str) -> Result<Self, LoadError> {
        let device = Device::Cpu;
        let config_path = dir.join("config.json");
        let model_type: ModelType = read_json(&config_path)?;
        let tokenizer_path = dir.join("tokenizer.json");
        let tokenizer = Tokenizer::from_file(&tokenizer_path).map_err(|e| LoadError::Tokenizer {
            path: tokenizer_path.clone(),
            reason: e.to_string(),
        })?;
        let weights_path = dir.join("model.safetensors");
        let weights = load_weights(&weights_path, &device)?;
        let vb = VarBuilder::from_tensors(weights, DType::F32, &device);
        let wrap = |source| LoadError::Weights {
            path: weights_path.clone(),
            source,
        };

        let (network, vocab_size, mask) = match model_type.model_type.as_str() {
            kind @ ("bert" | "roberta") => {
                let config: EncoderConfig = read_json(&config_path)?;
                let (layout, cls, sep, masks) = if kind == "bert" {
                    (Layout::Bert, ["[CLS]"], ["[SEP]"], ["[MASK]"])
                } else {
                    (Layout::Roberta, ["<s>"], ["</s>"], ["<mask>"])
                };
                let model = MaskedLm::load(&config, layout, vb).map_err(wrap)?;
                let (_, open) = find_token(&tokenizer, dir, "cls_token", &cls)?;
                let (_, close) = find_token(&tokenizer, dir, "sep_token", &sep)?;
                let mask = find_token(&tokenizer, dir, "mask_token", &masks)?;
                (
                    Network::Encoder { model, open, close },
                    config.vocab_size,
                    Some(mask.0),
                )
            }
            "gpt2" => {
                let config: Gpt2Config = read_json(&config_path)?;
                let model = CausalLm::load(&config, vb).map_err(wrap)?;
                let bos = match config.bos_token_id {
                    Some(id) => id,
                    None => find_token(&tokenizer, dir, "bos_token", &["<|endoftext|>"])?.1,
                };
                (Network::Decoder { model, bos }, config.vocab_size, None)
            }
            other => return Err(LoadError::UnsupportedModel(other.to_string())),
        };

        let tokens = tokenizer.get_vocab(true);
        let mut vocabulary: Vec<Option<String>> = vec![None; vocab_size];
        for (token, id) in tokens {
            let slot = vocabulary.get_mut(id as usize).ok_or_else(|| {
                LoadError::Inconsistent(format!(
                    "tokenizer id {id} exceeds the model vocabulary of {vocab_size}"
                ))
            })?;
            *slot = Some(token);
        }
        // Ids the tokenizer never produces are padding rows of the embedding.
        let mut special: Vec<TokenId> = Vec::new();
        let vocabulary = vocabulary
            .into_iter()
            .enumerate()
            .map(|(id, token)| {
                token.unwrap_or_else(|| {
                    special.push(id as TokenId);
                    format!("<unassigned:{id}>")
                })
            })
            .collect();
        special.extend(
            tokenizer
                .get_added_tokens_decoder()
                .into_iter()
                .filter(|(_, t)| t.special)
                .map(|(id, _)| id),
        );
        let kind = if mask.is_some() { ModelKind::Masked } else { ModelKind::Causal };
        let descriptor = BackendDescriptor::new(name, kind, mask, vocabulary)
            .map_err(|e| LoadError::Inconsistent(e.to_string()))?
            .with_special_tokens(special);
        let space_prefixed = space_prefixed(&tokenizer);
        Ok(PretrainedModel {
            descriptor,
            tokenizer,
            network,
            space_prefixed,
            device,
        })
    }

    fn backend_error(&self, e: impl std::fmt::Display) -> taxoprompt::Error {
        taxoprompt::Error::Backend(format!("{}: {e}", self.descriptor.name()))
    }

    fn check_length(&self, len: usize) -> taxoprompt::Result<()> {
        let (max, extra) = match &self.network {
            Network::Encoder { model, .. } => (model.max_len(), 2),
            Network::Decoder { model, .. } => (model.max_len(), 1),
        };
        if len + extra > max {
            return Err(self.backend_error(format_args!(
                "input of {len} tokens exceeds the model limit of {}",
                max - extra
            )));
        }
        Ok(())
    }

    /// Runs the encoder on delimited copies of `rows` and returns the
    /// distribution at `positions[b]` (indices into the undelimited rows).
    fn encoder_logprobs(
        &self,
        rows: &[Vec<TokenId>],
        positions: &[usize],
    ) -> taxoprompt::Result<Vec<Vec<f64>>> {
        let Network::Encoder { model, open, close } = &self.network else {
            unreachable!("encoder call on a decoder");
        };
        let width = rows[0].len() + 2;
        let flat: Vec<u32> = rows
            .iter()
            .flat_map(|r| std::iter::once(*open).chain(r.iter().copied()).chain([*close]))
            .collect();
        let shifted: Vec<usize> = positions.iter().map(|p| p + 1).collect();
        Tensor::from_vec(flat, (rows.len(), width), &self.device)
            .and_then(|ids| model.logprobs_at(&ids, &shifted))
            .and_then(|t| t.to_vec2::<f64>())
            .map_err(|e| self.backend_error(e))
    }
}

impl LanguageModel for PretrainedModel {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, sentence: &str) -> taxoprompt::Result<TokenizedSentence> {
        encode(&self.tokenizer, &self.descriptor, sentence)
    }

    fn detokenize(&self, tokens: &[TokenId]) -> taxoprompt::Result<String> {
        self.tokenizer
            .decode(tokens, false)
            .map(|s| s.trim().to_string())
            .map_err(|e| self.backend_error(e))
    }

    fn fill_mask(&self, tokens: &[TokenId]) -> taxoprompt::Result<Vec<f64>> {
        let Some(mask) = self.descriptor.mask_id() else {
            return Err(taxoprompt::Error::Unsupported {
                backend: self.descriptor.name().to_string(),
                capability: "mask filling",
            });
        };
        let at: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == mask)
            .map(|(i, _)| i)
            .collect();
        if at.len() != 1 {
            return Err(taxoprompt::Error::MaskCount {
                mask: self.descriptor.mask_literal().unwrap_or_default().to_string(),
                sentence: self.detokenize(tokens).unwrap_or_default(),
                found: at.len(),
            });
        }
        self.check_length(tokens.len())?;
        Ok(self.encoder_logprobs(&[tokens.to_vec()], &at)?.remove(0))
    }

    fn masked_logprobs(&self, tokens: &[TokenId]) -> taxoprompt::Result<Vec<f64>> {
        let Some(mask) = self.descriptor.mask_id() else {
            return Err(taxoprompt::Error::Unsupported {
                backend: self.descriptor.name().to_string(),
                capability: "mask filling",
            });
        };
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        self.check_length(tokens.len())?;
        let mut out = Vec::with_capacity(tokens.len());
        let positions: Vec<usize> = (0..tokens.len()).collect();
        for chunk in positions.chunks(MASK_BATCH) {
            let rows: Vec<Vec<TokenId>> = chunk
                .iter()
                .map(|&i| {
                    let mut row = tokens.to_vec();
                    row[i] = mask;
                    row
                })
                .collect();
            let dists = self.encoder_logprobs(&rows, chunk)?;
            out.extend(chunk.iter().zip(dists).map(|(&i, d)| d[tokens[i] as usize]));
        }
        Ok(out)
    }

    fn causal_logprobs(&self, tokens: &[TokenId]) -> taxoprompt::Result<Vec<f64>> {
        let Network::Decoder { model, bos } = &self.network else {
            return Err(taxoprompt::Error::Unsupported {
                backend: self.descriptor.name().to_string(),
                capability: "causal scoring",
            });
        };
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        self.check_length(tokens.len())?;
        // The BOS token supplies the context for the first word.
        let ids: Vec<u32> = std::iter::once(*bos).chain(tokens.iter().copied()).collect();
        let n = ids.len();
        let dists = Tensor::from_vec(ids, (1, n), &self.device)
            .and_then(|ids| model.logprobs(&ids))
            .and_then(|t| t.to_vec2::<f64>())
            .map_err(|e| self.backend_error(e))?;
        Ok(tokens
            .iter()
            .zip(dists)
            .map(|(&t, d)| d[t as usize])
            .collect())
    }

    fn word_token(&self, surface: &str) -> taxoprompt::Result<Option<TokenId>> {
        word_token(self, self.space_prefixed, surface)
    }

    fn token_word(&self, id: TokenId) -> Option<String> {
        token_word(&self.tokenizer, &self.descriptor, id)
    }
}

fn space_prefixed(tokenizer: &Tokenizer) -> bool {
    tokenizer
        .get_vocab(false)
        .keys()
        .any(|t| t.starts_with('\u{120}'))
}

/// Word-initial spelling first for space-prefixed vocabularies, then the
/// bare form.
fn word_token(
    lm: &dyn LanguageModel,
    space_prefixed: bool,
    surface: &str,
) -> taxoprompt::Result<Option<TokenId>> {
    let forms: &[String] = if space_prefixed {
        &[format!(" {surface}"), surface.to_string()]
    } else {
        &[surface.to_string()]
    };
    for form in forms {
        if let [id] = lm.tokenize(form)?.tokens() {
            if !lm.descriptor().is_special(*id) {
                return Ok(Some(*id));
            }
        }
    }
    Ok(None)
}

fn token_word(tokenizer: &Tokenizer, descriptor: &BackendDescriptor, id: TokenId) -> Option<String> {
    if descriptor.is_special(id) {
        return None;
    }
    let text = tokenizer.decode(&[id], false).ok()?;
    let word = text.trim();
    let word = word.strip_prefix("##").unwrap_or(word);
    (!word.is_empty()).then(|| word.to_string())
}

fn encode(
    tokenizer: &Tokenizer,
    descriptor: &BackendDescriptor,
    sentence: &str,
) -> taxoprompt::Result<TokenizedSentence> {
    let encoding = tokenizer
        .encode(sentence, false)
        .map_err(|e| taxoprompt::Error::Backend(format!("{}: {e}", descriptor.name())))?;
    TokenizedSentence::new(encoding.get_ids().to_vec(), sentence, descriptor.vocab_size())
}

/// Only the tokenizer of a masked model: enough to decide which terms are
/// single tokens, without loading weights. Model calls are unsupported.
pub struct TokenizerOnly {
    descriptor: BackendDescriptor,
    tokenizer: Tokenizer,
    space_prefixed: bool,
}

impl TokenizerOnly {
    pub fn from_dir(dir: &Path, name: &str) -> Result<Self, LoadError> {
        let path = dir.join("tokenizer.json");
        let tokenizer = Tokenizer::from_file(&path).map_err(|e| LoadError::Tokenizer {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let (mask, _) = find_token(&tokenizer, dir, "mask_token", &["[MASK]", "<mask>"])?;
        let mut vocabulary: Vec<Option<String>> = vec![None; tokenizer.get_vocab_size(true)];
        for (token, id) in tokenizer.get_vocab(true) {
            if let Some(slot) = vocabulary.get_mut(id as usize) {
                *slot = Some(token);
            }
        }
        let vocabulary = vocabulary
            .into_iter()
            .enumerate()
            .map(|(id, t)| t.unwrap_or_else(|| format!("<unassigned:{id}>")))
            .collect();
        let special: Vec<TokenId> = tokenizer
            .get_added_tokens_decoder()
            .into_iter()
            .filter(|(_, t)| t.special)
            .map(|(id, _)| id)
            .collect();
        let descriptor = BackendDescriptor::new(name, ModelKind::Masked, Some(mask), vocabulary)
            .map_err(|e| LoadError::Inconsistent(e.to_string()))?
            .with_special_tokens(special)
            .with_concurrency(true);
        let space_prefixed = space_prefixed(&tokenizer);
        Ok(TokenizerOnly {
            descriptor,
            tokenizer,
            space_prefixed,
        })
    }
}

/// Resolves a directory holding at least a `tokenizer.json`.
pub fn load_tokenizer(name: &str) -> Result<TokenizerOnly, LoadError> {
    TokenizerOnly::from_dir(&resolve_dir_with(name, "tokenizer.json")?, name)
}

impl LanguageModel for TokenizerOnly {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, sentence: &str) -> taxoprompt::Result<TokenizedSentence> {
        encode(&self.tokenizer, &self.descriptor, sentence)
    }

    fn detokenize(&self, tokens: &[TokenId]) -> taxoprompt::Result<String> {
        self.tokenizer
            .decode(tokens, false)
            .map(|s| s.trim().to_string())
            .map_err(|e| taxoprompt::Error::Backend(format!("{}: {e}", self.descriptor.name())))
    }

    fn word_token(&self, surface: &str) -> taxoprompt::Result<Option<TokenId>> {
        word_token(self, self.space_prefixed, surface)
    }

    fn token_word(&self, id: TokenId) -> Option<String> {
        token_word(&self.tokenizer, &self.descriptor, id)
    }
}
