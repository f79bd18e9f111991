//! Bidirectional transformer encoders with a tied masked-LM head (BERT and
//! RoBERTa layouts).

use candle_core::{DType, Module, Result, Tensor, D};
use candle_nn::{embedding, layer_norm, linear, Embedding, LayerNorm, Linear, VarBuilder};
use serde::Deserialize;

use crate::Activation;

#[derive(Debug, Clone, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default)]
    pub hidden_act: Activation,
    #[serde(default)]
    pub pad_token_id: Option<u32>,
}

fn default_type_vocab() -> usize {
    2
}

fn default_eps() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Bert,
    Roberta,
}

impl Layout {
    fn prefix(self) -> &'static str {
        match self {
            Layout::Bert => "bert",
            Layout::Roberta => "roberta",
        }
    }
}

struct Attention {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    norm: LayerNorm,
    heads: usize,
    head_dim: usize,
}

impl Attention {
    fn load(cfg: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        let h = cfg.hidden_size;
        let own = vb.pp("self");
        Ok(Attention {
            query: linear(h, h, own.pp("query"))?,
            key: linear(h, h, own.pp("key"))?,
            value: linear(h, h, own.pp("value"))?,
            output: linear(h, h, vb.pp("output.dense"))?,
            norm: layer_norm(h, cfg.layer_norm_eps, vb.pp("output.LayerNorm"))?,
            heads: cfg.num_attention_heads,
            head_dim: h / cfg.num_attention_heads,
        })
    }

    fn split(&self, xs: &Tensor) -> Result<Tensor> {
        let (b, n, _) = xs.dims3()?;
        xs.reshape((b, n, self.heads, self.head_dim))?
            .transpose(1, 2)?
            .contiguous()
    }

    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let (b, n, h) = xs.dims3()?;
        let q = self.split(&self.query.forward(xs)?)?;
        let k = self.split(&self.key.forward(xs)?)?;
        let v = self.split(&self.value.forward(xs)?)?;
        let scores = (q.matmul(&k.t()?)? / (self.head_dim as f64).sqrt())?;
        let weights = candle_nn::ops::softmax_last_dim(&scores)?;
        let context = weights
            .matmul(&v)?
            .transpose(1, 2)?
            .reshape((b, n, h))?;
        self.norm.forward(&(self.output.forward(&context)? + xs)?)
    }
}

struct Layer {
    attention: Attention,
    intermediate: Linear,
    output: Linear,
    norm: LayerNorm,
    act: Activation,
}

impl Layer {
    fn load(cfg: &EncoderConfig, vb: VarBuilder) -> Result<Self> {
        Ok(Layer {
            attention: Attention::load(cfg, vb.pp("attention"))?,
            intermediate: linear(
                cfg.hidden_size,
                cfg.intermediate_size,
                vb.pp("intermediate.dense"),
            )?,
            output: linear(cfg.intermediate_size, cfg.hidden_size, vb.pp("output.dense"))?,
            norm: layer_norm(cfg.hidden_size, cfg.layer_norm_eps, vb.pp("output.LayerNorm"))?,
            act: cfg.hidden_act,
        })
    }

    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let attended = self.attention.forward(xs)?;
        let inner = self.act.apply(&self.intermediate.forward(&attended)?)?;
        self.norm.forward(&(self.output.forward(&inner)? + attended)?)
    }
}

pub struct MaskedLm {
    words: Embedding,
    positions: Embedding,
    token_types: Embedding,
    embed_norm: LayerNorm,
    layers: Vec<Layer>,
    head_dense: Linear,
    head_norm: LayerNorm,
    head_bias: Tensor,
    act: Activation,
    position_offset: u32,
    max_positions: usize,
}

impl MaskedLm {
    pub fn load(cfg: &EncoderConfig, layout: Layout, vb: VarBuilder) -> Result<Self> {
        let h = cfg.hidden_size;
        let body = vb.pp(layout.prefix());
        let emb = body.pp("embeddings");
        let layers = (0..cfg.num_hidden_layers)
            .map(|i| Layer::load(cfg, body.pp(format!("encoder.layer.{i}"))))
            .collect::<Result<Vec<_>>>()?;
        let (head_dense, head_norm, head_bias) = match layout {
            Layout::Bert => (
                linear(h, h, vb.pp("cls.predictions.transform.dense"))?,
                layer_norm(h, cfg.layer_norm_eps, vb.pp("cls.predictions.transform.LayerNorm"))?,
                vb.get(cfg.vocab_size, "cls.predictions.bias")?,
            ),
            Layout::Roberta => (
                linear(h, h, vb.pp("lm_head.dense"))?,
                layer_norm(h, cfg.layer_norm_eps, vb.pp("lm_head.layer_norm"))?,
                vb.get(cfg.vocab_size, "lm_head.bias")?,
            ),
        };
        // RoBERTa numbers positions from padding_idx + 1.
        let position_offset = match layout {
            Layout::Bert => 0,
            Layout::Roberta => cfg.pad_token_id.unwrap_or(1) + 1,
        };
        Ok(MaskedLm {
            words: embedding(cfg.vocab_size, h, emb.pp("word_embeddings"))?,
            positions: embedding(cfg.max_position_embeddings, h, emb.pp("position_embeddings"))?,
            token_types: embedding(cfg.type_vocab_size, h, emb.pp("token_type_embeddings"))?,
            embed_norm: layer_norm(h, cfg.layer_norm_eps, emb.pp("LayerNorm"))?,
            layers,
            head_dense,
            head_norm,
            head_bias,
            act: cfg.hidden_act,
            position_offset,
            max_positions: cfg.max_position_embeddings - position_offset as usize,
        })
    }

    /// Longest input, delimiters included.
    pub fn max_len(&self) -> usize {
        self.max_positions
    }

    /// Hidden states for a `(batch, len)` id tensor.
    fn encode(&self, ids: &Tensor) -> Result<Tensor> {
        let (_, n) = ids.dims2()?;
        let device = ids.device();
        let positions = Tensor::arange(self.position_offset, self.position_offset + n as u32, device)?;
        let types = ids.zeros_like()?;
        let xs = self
            .words
            .forward(ids)?
            .broadcast_add(&self.positions.forward(&positions)?)?
            .add(&self.token_types.forward(&types)?)?;
        let mut xs = self.embed_norm.forward(&xs)?;
        for layer in &self.layers {
            xs = layer.forward(&xs)?;
        }
        Ok(xs)
    }

    /// Log-softmax over the vocabulary at `positions[b]` of each batch row,
    /// as a `(batch, vocab)` f64 tensor.
    pub fn logprobs_at(&self, ids: &Tensor, positions: &[usize]) -> Result<Tensor> {
        let hidden = self.encode(ids)?;
        let rows = positions
            .iter()
            .enumerate()
            .map(|(b, &p)| hidden.get(b)?.get(p))
            .collect::<Result<Vec<_>>>()?;
        let picked = Tensor::stack(&rows, 0)?;
        let transformed = self
            .head_norm
            .forward(&self.act.apply(&self.head_dense.forward(&picked)?)?)?;
        let logits = transformed
            .matmul(&self.words.embeddings().t()?)?
            .broadcast_add(&self.head_bias)?;
        candle_nn::ops::log_softmax(&logits.to_dtype(DType::F64)?, D::Minus1)
    }
}
