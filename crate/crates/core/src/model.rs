//! End-to-end author classifier: post encoder → post-level attention →
//! classification head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{post_weights, AttentionHead, PoolingMode};
use crate::autograd::{softmax, ForwardMode, Graph, ParamId, ParamStore, Var};
use crate::classifier::{predict, Classifier};
use crate::corpus::{join_posts, AuthorProfile, EncodedPost, Label, Vocabulary, UNK_ID};
use crate::encoder::{EncoderConfig, PrecomputedEmbeddingStore, ToyEncoder};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    #[default]
    Toy,
    Precomputed,
}

impl std::str::FromStr for EncoderMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(EncoderMode::Toy),
            "precomputed" => Ok(EncoderMode::Precomputed),
            other => Err(Error::Config(format!("unknown encoder mode {other:?}"))),
        }
    }
}

/// How an author's feed reaches the encoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// One embedding per post, pooled by the attention head.
    #[default]
    PerPost,
    /// All posts concatenated into a single sequence, one embedding per author.
    Joined,
}

impl std::str::FromStr for BaselineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-post" => Ok(BaselineMode::PerPost),
            "joined" => Ok(BaselineMode::Joined),
            other => Err(Error::Config(format!("unknown baseline mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder_mode: EncoderMode,
    pub baseline: BaselineMode,
    pub pooling: PoolingMode,
    /// Toy encoder shape. `vocab_size` is overwritten from the vocabulary the
    /// model is built with. In joined mode `max_post_len` is the join length.
    pub encoder: EncoderConfig,
    /// Width of precomputed embeddings; ignored for the toy encoder.
    pub embedding_dim: usize,
    /// Classifier hidden width; `None` means the embedding width.
    pub hidden: Option<usize>,
    pub dropout_p: f64,
    /// Wrap posts in start/end markers when joining.
    pub join_markers: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_mode: EncoderMode::Toy,
            baseline: BaselineMode::PerPost,
            pooling: PoolingMode::Attention,
            encoder: EncoderConfig::desk(0),
            embedding_dim: 64,
            hidden: None,
            dropout_p: 0.1,
            join_markers: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.baseline == BaselineMode::Joined && self.encoder_mode != EncoderMode::Toy {
            return Err(Error::Config("the joined baseline requires the toy encoder".into()));
        }
        if self.encoder_mode == EncoderMode::Precomputed && self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        if self.hidden == Some(0) {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    /// Width of the post embeddings fed to the attention head.
    pub fn dim(&self) -> usize {
        match self.encoder_mode {
            EncoderMode::Toy => self.encoder.d_model,
            EncoderMode::Precomputed => self.embedding_dim,
        }
    }
}

/// Model-ready form of one author.
#[derive(Clone, Debug, PartialEq)]
pub enum AuthorInput {
    /// Token ids per post (or one joined sequence), run through the toy encoder.
    Posts(Vec<EncodedPost>),
    /// Fixed n×d post embeddings.
    Embeddings(Tensor),
}

impl AuthorInput {
    pub fn post_count(&self) -> usize {
        match self {
            AuthorInput::Posts(p) => p.len(),
            AuthorInput::Embeddings(t) => t.dims2().0,
        }
    }
}

#[derive(Debug)]
pub struct ForwardOutput {
    pub logits: Var,
    pub attention: Option<Var>,
    /// Last-layer encoder attention per post, when the toy encoder ran.
    pub token_attentions: Vec<Tensor>,
}

/// Eval-mode output for one author.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: [f64; 2],
    pub probs: [f64; 2],
    pub label: Label,
    pub post_weights: Option<Tensor>,
    pub token_attentions: Vec<Tensor>,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    vocab: Option<Vocabulary>,
    pub store: ParamStore,
    encoder: Option<ToyEncoder>,
    head: AttentionHead,
    classifier: Classifier,
}

/// Encodes a post's tokens; a post with no tokens becomes a single `[UNK]`.
pub fn encode_tokens(vocab: &Vocabulary, tokens: &[String], max_len: usize) -> Result<EncodedPost> {
    let mut encoded = vocab.encode(tokens, max_len)?;
    if encoded.real_len() == 0 {
        encoded.token_ids[0] = UNK_ID;
        encoded.attention_mask[0] = 1;
    }
    Ok(encoded)
}

impl Model {
    /// Builds freshly initialised parameters. Parameter creation order is
    /// fixed, so the same config, vocabulary and RNG state give the same model.
    pub fn new<R: Rng + ?Sized>(mut config: ModelConfig, vocab: Option<Vocabulary>, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let encoder = match config.encoder_mode {
            EncoderMode::Toy => {
                let vocab = vocab
                    .as_ref()
                    .ok_or_else(|| Error::Config("the toy encoder needs a vocabulary".into()))?;
                config.encoder.vocab_size = vocab.len();
                Some(ToyEncoder::new(config.encoder.clone(), &mut store, rng)?)
            }
            EncoderMode::Precomputed => None,
        };
        let d = config.dim();
        let head = AttentionHead::new(d, &mut store, rng);
        let classifier = Classifier::new(d, config.hidden.unwrap_or(d), config.dropout_p, &mut store, rng)?;
        Ok(Model {
            config,
            vocab,
            store,
            encoder,
            head,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> Option<&Vocabulary> {
        self.vocab.as_ref()
    }

    pub fn encoder(&self) -> Option<&ToyEncoder> {
        self.encoder.as_ref()
    }

    pub fn head(&self) -> &AttentionHead {
        &self.head
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    /// Parameters updated by training. Encoder weights are left out when
    /// frozen.
    pub fn trainable_ids(&self, freeze_encoder: bool) -> Vec<ParamId> {
        let mut ids = Vec::new();
        if let (Some(enc), false) = (&self.encoder, freeze_encoder) {
            ids.extend(enc.param_ids());
        }
        ids.extend(self.head.param_ids());
        ids.extend(self.classifier.param_ids());
        ids
    }

    /// Converts a profile into model input.
    pub fn prepare(&self, profile: &AuthorProfile, embeddings: Option<&PrecomputedEmbeddingStore>) -> Result<AuthorInput> {
        match self.config.encoder_mode {
            EncoderMode::Precomputed => {
                let store = embeddings
                    .ok_or_else(|| Error::Config("precomputed encoder mode needs an embeddings file".into()))?;
                if store.dim() != self.config.embedding_dim {
                    return Err(Error::dim("embeddings", &[store.dim()], &[self.config.embedding_dim]));
                }
                Ok(AuthorInput::Embeddings(store.get(&profile.author_id)?))
            }
            EncoderMode::Toy => {
                let vocab = self.vocab.as_ref().expect("toy model has a vocabulary");
                let len = self.config.encoder.max_post_len;
                match self.config.baseline {
                    BaselineMode::Joined => {
                        let mut joined = join_posts(profile, vocab, len, self.config.join_markers)?;
                        if joined.real_len() == 0 {
                            joined.token_ids[0] = UNK_ID;
                            joined.attention_mask[0] = 1;
                        }
                        Ok(AuthorInput::Posts(vec![joined]))
                    }
                    BaselineMode::PerPost => Ok(AuthorInput::Posts(
                        profile
                            .posts
                            .iter()
                            .map(|p| encode_tokens(vocab, &p.tokens, len))
                            .collect::<Result<_>>()?,
                    )),
                }
            }
        }
    }

    /// Replaces token input by eval-mode post embeddings, so a frozen encoder
    /// runs once per author instead of once per step.
    pub fn freeze_input(&self, input: AuthorInput) -> Result<AuthorInput> {
        match (input, &self.encoder) {
            (AuthorInput::Posts(posts), Some(enc)) => {
                let rows = posts
                    .iter()
                    .map(|p| enc.encode_post(&self.store, p).map(|(v, _)| v.into_data()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(AuthorInput::Embeddings(Tensor::from_rows(&rows)?))
            }
            (other, _) => Ok(other),
        }
    }

    /// Eval-mode n×d post embeddings of a profile, one row per post.
    pub fn post_embeddings(&self, profile: &AuthorProfile, embeddings: Option<&PrecomputedEmbeddingStore>) -> Result<Tensor> {
        match self.freeze_input(self.prepare(profile, embeddings)?)? {
            AuthorInput::Embeddings(t) => Ok(t),
            AuthorInput::Posts(_) => Err(Error::Usage("token input without an encoder".into())),
        }
    }

    pub fn forward(&self, g: &mut Graph, input: &AuthorInput, mode: &mut ForwardMode) -> Result<ForwardOutput> {
        self.forward_with(&self.store, g, input, mode)
    }

    /// Forward pass reading parameter values from `store`, which must share
    /// this model's layout.
    pub fn forward_with(
        &self,
        store: &ParamStore,
        g: &mut Graph,
        input: &AuthorInput,
        mode: &mut ForwardMode,
    ) -> Result<ForwardOutput> {
        let mut token_attentions = Vec::new();
        let hp = match input {
            AuthorInput::Embeddings(t) => {
                if t.dims2().1 != self.config.dim() {
                    return Err(Error::dim("author input", t.shape(), &[self.config.dim()]));
                }
                g.constant(t.clone())
            }
            AuthorInput::Posts(posts) => {
                let enc = self
                    .encoder
                    .as_ref()
                    .ok_or_else(|| Error::Usage("token input given to a model without an encoder".into()))?;
                let mut rows = Vec::with_capacity(posts.len());
                for p in posts {
                    let out = enc.forward(g, store, p, mode)?;
                    rows.push(out.pooled);
                    token_attentions.push(out.last_attention);
                }
                g.stack_rows(&rows)?
            }
        };
        let pooled = self.head.forward(g, store, hp, self.config.pooling)?;
        let logits = self.classifier.forward(g, store, pooled.author_vector, mode)?;
        Ok(ForwardOutput {
            logits,
            attention: pooled.attention,
            token_attentions,
        })
    }

    pub fn predict(&self, input: &AuthorInput) -> Result<Prediction> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, input, &mut ForwardMode::Eval)?;
        let z = g.value(out.logits).data();
        let logits = [z[0], z[1]];
        let p = softmax(&logits);
        let probs = [p[0], p[1]];
        Ok(Prediction {
            logits,
            probs,
            label: predict(&probs),
            post_weights: out.attention.map(|a| post_weights(g.value(a))),
            token_attentions: out.token_attentions,
        })
    }

    /// Overwrites parameter values by name; every parameter must be present.
    pub fn load_values(&mut self, values: &[(String, Tensor)]) -> Result<()> {
        if values.len() != self.store.len() {
            return Err(Error::Consistency(format!(
                "expected {} parameters, found {}",
                self.store.len(),
                values.len()
            )));
        }
        for (name, value) in values {
            let id = self
                .store
                .find(name)
                .ok_or_else(|| Error::Consistency(format!("unknown parameter {name}")))?;
            let slot = &mut self.store.get_mut(id).value;
            if slot.shape() != value.shape() {
                return Err(Error::dim("load parameter", slot.shape(), value.shape()));
            }
            *slot = value.clone();
        }
        Ok(())
    }
}
