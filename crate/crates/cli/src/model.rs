//! Backend selection from a `--model` value.

use anyhow::Context;
use taxoprompt::backend::{LanguageModel, MockBuilder, ModelKind};

/// Opens `spec`: `mock-masked:TABLE` and `mock-causal:TABLE` build a mock
/// from a probability table; anything else names a pretrained model.
pub fn open(spec: &str) -> anyhow::Result<Box<dyn LanguageModel>> {
    if let Some((kind, path)) = mock_spec(spec) {
        let model = MockBuilder::from_tsv(path, kind)?.name(spec).build()?;
        return Ok(Box::new(model));
    }
    let model = taxoprompt_pretrained::load(spec).with_context(|| format!("cannot load model `{spec}`"))?;
    Ok(Box::new(model))
}

/// Like [`open`], but a pretrained masked model only needs its tokenizer.
pub fn open_tokenizer(spec: &str) -> anyhow::Result<Box<dyn LanguageModel>> {
    if mock_spec(spec).is_some() {
        return open(spec);
    }
    let model = taxoprompt_pretrained::load_tokenizer(spec)
        .with_context(|| format!("cannot load tokenizer of `{spec}`"))?;
    Ok(Box::new(model))
}

fn mock_spec(spec: &str) -> Option<(ModelKind, &str)> {
    if let Some(path) = spec.strip_prefix("mock-masked:") {
        Some((ModelKind::Masked, path))
    } else {
        spec.strip_prefix("mock-causal:").map(|path| (ModelKind::Causal, path))
    }
}
