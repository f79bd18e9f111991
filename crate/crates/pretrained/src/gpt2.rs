//! Left-to-right GPT-2 decoder with tied output embeddings.

use candle_core::{DType, Module, Result, Tensor, D};
use candle_nn::{embedding, layer_norm, Embedding, LayerNorm, VarBuilder};
use serde::Deserialize;

use crate::Activation;

#[derive(Debug, Clone, Deserialize)]
pub struct Gpt2Config {
    pub vocab_size: usize,
    pub n_embd: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub n_positions: usize,
    #[serde(default)]
    pub n_inner: Option<usize>,
    #[serde(default = "default_eps")]
    pub layer_norm_epsilon: f64,
    #[serde(default = "default_act")]
    pub activation_function: Activation,
    #[serde(default)]
    pub bos_token_id: Option<u32>,
}

fn default_eps() -> f64 {
    1e-5
}

fn default_act() -> Activation {
    Activation::GeluTanh
}

/// GPT-2's `Conv1D`: a linear map whose weight is stored `[in, out]`.
struct Conv1D {
    weight: Tensor,
    bias: Tensor,
}

impl Conv1D {
    fn load(d_in: usize, d_out: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Conv1D {
            weight: vb.get((d_in, d_out), "weight")?,
            bias: vb.get(d_out, "bias")?,
        })
    }
}

impl Module for Conv1D {
    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        xs.broadcast_matmul(&self.weight)?.broadcast_add(&self.bias)
    }
}

struct Block {
    ln_1: LayerNorm,
    c_attn: Conv1D,
    attn_proj: Conv1D,
    ln_2: LayerNorm,
    c_fc: Conv1D,
    mlp_proj: Conv1D,
    act: Activation,
    heads: usize,
}

impl Block {
    fn load(cfg: &Gpt2Config, vb: VarBuilder) -> Result<Self> {
        let h = cfg.n_embd;
        let inner = cfg.n_inner.unwrap_or(4 * h);
        Ok(Block {
            ln_1: layer_norm(h, cfg.layer_norm_epsilon, vb.pp("ln_1"))?,
            c_attn: Conv1D::load(h, 3 * h, vb.pp("attn.c_attn"))?,
            attn_proj: Conv1D::load(h, h, vb.pp("attn.c_proj"))?,
            ln_2: layer_norm(h, cfg.layer_norm_epsilon, vb.pp("ln_2"))?,
            c_fc: Conv1D::load(h, inner, vb.pp("mlp.c_fc"))?,
            mlp_proj: Conv1D::load(inner, h, vb.pp("mlp.c_proj"))?,
            act: cfg.activation_function,
            heads: cfg.n_head,
        })
    }

    fn attend(&self, xs: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let (b, n, h) = xs.dims3()?;
        let d = h / self.heads;
        let qkv = self.c_attn.forward(xs)?;
        let split = |i: usize| -> Result<Tensor> {
            qkv.narrow(D::Minus1, i * h, h)?
                .reshape((b, n, self.heads, d))?
                .transpose(1, 2)?
                .contiguous()
        };
        let (q, k, v) = (split(0)?, split(1)?, split(2)?);
        let scores = (q.matmul(&k.t()?)? / (d as f64).sqrt())?.broadcast_add(mask)?;
        let weights = candle_nn::ops::softmax_last_dim(&scores)?;
        let context = weights.matmul(&v)?.transpose(1, 2)?.reshape((b, n, h))?;
        self.attn_proj.forward(&context)
    }

    fn forward(&self, xs: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let xs = (xs + self.attend(&self.ln_1.forward(xs)?, mask)?)?;
        let inner = self.act.apply(&self.c_fc.forward(&self.ln_2.forward(&xs)?)?)?;
        xs + self.mlp_proj.forward(&inner)?
    }
}

pub struct CausalLm {
    wte: Embedding,
    wpe: Embedding,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    max_positions: usize,
}

impl CausalLm {
    /// `vb` is rooted where `wte`/`wpe`/`h.N` live.
    pub fn load(cfg: &Gpt2Config, vb: VarBuilder) -> Result<Self> {
        let blocks = (0..cfg.n_layer)
            .map(|i| Block::load(cfg, vb.pp(format!("h.{i}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(CausalLm {
            wte: embedding(cfg.vocab_size, cfg.n_embd, vb.pp("wte"))?,
            wpe: embedding(cfg.n_positions, cfg.n_embd, vb.pp("wpe"))?,
            blocks,
            ln_f: layer_norm(cfg.n_embd, cfg.layer_norm_epsilon, vb.pp("ln_f"))?,
            max_positions: cfg.n_positions,
        })
    }

    pub fn max_len(&self) -> usize {
        self.max_positions
    }

    /// Log-softmax over the vocabulary at every position of a `(1, len)`
    /// input, as a `(len, vocab)` f64 tensor.
    pub fn logprobs(&self, ids: &Tensor) -> Result<Tensor> {
        let (_, n) = ids.dims2()?;
        let device = ids.device();
        let positions = Tensor::arange(0u32, n as u32, device)?;
        let mut xs = self
            .wte
            .forward(ids)?
            .broadcast_add(&self.wpe.forward(&positions)?)?;
        let mask: Vec<f32> = (0..n)
            .flat_map(|i| (0..n).map(move |j| if j > i { f32::NEG_INFINITY } else { 0.0 }))
            .collect();
        let mask = Tensor::from_vec(mask, (n, n), device)?;
        for block in &self.blocks {
            xs = block.forward(&xs, &mask)?;
        }
        let hidden = self.ln_f.forward(&xs)?.get(0)?;
        let logits = hidden.matmul(&self.wte.embeddings().t()?)?;
        candle_nn::ops::log_softmax(&logits.to_dtype(DType::F64)?, D::Minus1)
    }
}
