//! Post encoders: a small trainable transformer with masked mean pooling, and
//! a store of precomputed sentence embeddings.

mod semb;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{ForwardMode, Graph, ParamId, ParamStore, Var};
use crate::corpus::{AuthorProfile, EncodedPost, Vocabulary};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) use semb::ByteReader;
pub use semb::{EmbeddingMatrix, PrecomputedEmbeddingStore, SEMB_MAGIC, SEMB_VERSION};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_post_len: usize,
    pub vocab_size: usize,
    pub dropout_p: f64,
}

impl EncoderConfig {
    /// Desk-scale defaults: width 64, two layers of four heads, posts of 32
    /// tokens.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            max_post_len: 32,
            vocab_size,
            dropout_p: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_layers == 0 {
            return fail("n_layers must be at least 1".into());
        }
        if self.max_post_len == 0 || self.d_ff == 0 || self.vocab_size == 0 {
            return fail("max_post_len, d_ff and vocab_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout_p));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Clone, Debug)]
struct LayerParams {
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
    ff1: ParamId,
    ff1_bias: ParamId,
    ff2: ParamId,
    ff2_bias: ParamId,
}

/// Pre-norm transformer encoder over one padded post, with learned token and
/// position embeddings. Parameters live in a shared [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ToyEncoder {
    config: EncoderConfig,
    token_embedding: ParamId,
    position_embedding: ParamId,
    layers: Vec<LayerParams>,
    final_gain: ParamId,
    final_bias: ParamId,
}

/// Output of encoding one post inside a graph.
#[derive(Debug)]
pub struct EncodedOutput {
    pub pooled: Var,
    /// Last-layer attention probabilities, heads×L×L.
    pub last_attention: Tensor,
}

impl ToyEncoder {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let f = config.d_ff;
        let token_embedding =
            store.add("encoder.token_embedding", Tensor::uniform(&[config.vocab_size, d], 1.0, rng));
        let position_embedding = store.add(
            "encoder.position_embedding",
            Tensor::uniform(&[config.max_post_len, d], 0.1, rng),
        );
        let layers = (0..config.n_layers)
            .map(|l| {
                let mut add = |name: &str, t: Tensor| store.add(format!("encoder.layer{l}.{name}"), t);
                LayerParams {
                    ln1_gain: add("ln1.gain", Tensor::filled(&[d], 1.0)),
                    ln1_bias: add("ln1.bias", Tensor::zeros(&[d])),
                    wq: add("attn.wq", Tensor::xavier(d, d, rng)),
                    bq: add("attn.bq", Tensor::zeros(&[d])),
                    wk: add("attn.wk", Tensor::xavier(d, d, rng)),
                    bk: add("attn.bk", Tensor::zeros(&[d])),
                    wv: add("attn.wv", Tensor::xavier(d, d, rng)),
                    bv: add("attn.bv", Tensor::zeros(&[d])),
                    wo: add("attn.wo", Tensor::xavier(d, d, rng)),
                    bo: add("attn.bo", Tensor::zeros(&[d])),
                    ln2_gain: add("ln2.gain", Tensor::filled(&[d], 1.0)),
                    ln2_bias: add("ln2.bias", Tensor::zeros(&[d])),
                    ff1: add("ff.w1", Tensor::xavier(d, f, rng)),
                    ff1_bias: add("ff.b1", Tensor::zeros(&[f])),
                    ff2: add("ff.w2", Tensor::xavier(f, d, rng)),
                    ff2_bias: add("ff.b2", Tensor::zeros(&[d])),
                }
            })
            .collect();
        let final_gain = store.add("encoder.final_ln.gain", Tensor::filled(&[d], 1.0));
        let final_bias = store.add("encoder.final_ln.bias", Tensor::zeros(&[d]));
        Ok(ToyEncoder {
            config,
            token_embedding,
            position_embedding,
            layers,
            final_gain,
            final_bias,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.token_embedding, self.position_embedding];
        for l in &self.layers {
            ids.extend([
                l.ln1_gain, l.ln1_bias, l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo, l.ln2_gain,
                l.ln2_bias, l.ff1, l.ff1_bias, l.ff2, l.ff2_bias,
            ]);
        }
        ids.extend([self.final_gain, self.final_bias]);
        ids
    }

    fn linear(g: &mut Graph, store: &ParamStore, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let wv = g.param(store, w);
        let bv = g.param(store, b);
        let y = g.matmul(x, wv)?;
        g.add_bias(y, bv)
    }

    /// Records the forward pass of one post into `g`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        post: &EncodedPost,
        mode: &mut ForwardMode,
    ) -> Result<EncodedOutput> {
        let cfg = &self.config;
        let len = post.len();
        if len != cfg.max_post_len {
            return Err(Error::dim("toy_encode_post", &[len], &[cfg.max_post_len]));
        }
        let mask = post.mask();
        if !mask.contains(&true) {
            return Err(Error::Degenerate("post has no real tokens".into()));
        }
        let key_mask: Vec<bool> = (0..len).flat_map(|_| mask.iter().copied()).collect();
        let hd = cfg.head_dim();
        let inv_sqrt = 1.0 / (hd as f64).sqrt();

        let table = g.param(store, self.token_embedding);
        let tokens = g.gather_rows(table, &post.token_ids)?;
        let positions = g.param(store, self.position_embedding);
        let x = g.add(tokens, positions)?;
        let mut x = g.dropout(x, cfg.dropout_p, mode)?;

        let mut last_attention = Vec::with_capacity(cfg.n_heads * len * len);
        for (li, layer) in self.layers.iter().enumerate() {
            let gain = g.param(store, layer.ln1_gain);
            let bias = g.param(store, layer.ln1_bias);
            let h = g.layer_norm(x, gain, bias, LN_EPS)?;
            let q = Self::linear(g, store, h, layer.wq, layer.bq)?;
            let k = Self::linear(g, store, h, layer.wk, layer.bk)?;
            let v = Self::linear(g, store, h, layer.wv, layer.bv)?;
            let is_last = li + 1 == self.layers.len();
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for head in 0..cfg.n_heads {
                let qh = g.slice_cols(q, head * hd, hd)?;
                let kh = g.slice_cols(k, head * hd, hd)?;
                let vh = g.slice_cols(v, head * hd, hd)?;
                let kt = g.transpose(kh)?;
                let scores = g.matmul(qh, kt)?;
                let scores = g.scale(scores, inv_sqrt);
                let probs = g.masked_row_softmax(scores, Some(&key_mask))?;
                if is_last {
                    last_attention.extend_from_slice(g.value(probs).data());
                }
                heads.push(g.matmul(probs, vh)?);
            }
            let joined = g.concat_cols(&heads)?;
            let attn = Self::linear(g, store, joined, layer.wo, layer.bo)?;
            let attn = g.dropout(attn, cfg.dropout_p, mode)?;
            x = g.add(x, attn)?;

            let gain = g.param(store, layer.ln2_gain);
            let bias = g.param(store, layer.ln2_bias);
            let h = g.layer_norm(x, gain, bias, LN_EPS)?;
            let ff = Self::linear(g, store, h, layer.ff1, layer.ff1_bias)?;
            let ff = g.gelu(ff);
            let ff = Self::linear(g, store, ff, layer.ff2, layer.ff2_bias)?;
            let ff = g.dropout(ff, cfg.dropout_p, mode)?;
            x = g.add(x, ff)?;
        }
        let gain = g.param(store, self.final_gain);
        let bias = g.param(store, self.final_bias);
        let x = g.layer_norm(x, gain, bias, LN_EPS)?;
        let pooled = g.masked_mean(x, &mask)?;
        Ok(EncodedOutput {
            pooled,
            last_attention: Tensor::new(vec![cfg.n_heads, len, len], last_attention)?,
        })
    }

    /// Eval-mode encoding of one post: pooled embedding and last-layer
    /// attention (heads×L×L).
    pub fn encode_post(&self, store: &ParamStore, post: &EncodedPost) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, store, post, &mut ForwardMode::Eval)?;
        Ok((g.value(out.pooled).clone(), out.last_attention))
    }
}

/// Per-post embeddings of one author.
#[derive(Clone, Debug, PartialEq)]
pub struct PostMatrix {
    pub author_id: String,
    /// n×d, row i embeds post i in feed order.
    pub hp: Tensor,
    pub post_masks: Vec<Vec<u8>>,
    /// Last-layer attention per post; only produced by the toy encoder.
    pub token_attentions: Option<Vec<Tensor>>,
}

/// Source of post embeddings.
#[derive(Clone, Copy, Debug)]
pub enum EmbeddingProvider<'a> {
    Toy {
        encoder: &'a ToyEncoder,
        store: &'a ParamStore,
        vocab: &'a Vocabulary,
    },
    Precomputed(&'a PrecomputedEmbeddingStore),
}

/// Encodes every post of `profile` (eval mode).
pub fn encode_profile(provider: EmbeddingProvider<'_>, profile: &AuthorProfile) -> Result<PostMatrix> {
    match provider {
        EmbeddingProvider::Precomputed(store) => {
            let hp = store.get(&profile.author_id)?;
            Ok(PostMatrix {
                author_id: profile.author_id.clone(),
                hp,
                post_masks: Vec::new(),
                token_attentions: None,
            })
        }
        EmbeddingProvider::Toy {
            encoder,
            store,
            vocab,
        } => {
            let max_len = encoder.config().max_post_len;
            let mut rows = Vec::with_capacity(profile.posts.len());
            let mut masks = Vec::with_capacity(profile.posts.len());
            let mut attentions = Vec::with_capacity(profile.posts.len());
            for post in &profile.posts {
                let encoded = vocab.encode(&post.tokens, max_len)?;
                let (pooled, attn) = encoder.encode_post(store, &encoded)?;
                rows.push(pooled.into_data());
                masks.push(encoded.attention_mask);
                attentions.push(attn);
            }
            Ok(PostMatrix {
                author_id: profile.author_id.clone(),
                hp: Tensor::from_rows(&rows)?,
                post_masks: masks,
                token_attentions: Some(attentions),
            })
        }
    }
}
