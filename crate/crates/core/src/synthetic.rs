//! Generated corpora with a known decision rule: spreaders, and only
//! spreaders, use a marker token in a fixed share of their posts.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AuthorProfile, Corpus, Label, Post};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::Hyperparams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub authors: usize,
    pub posts_per_author: usize,
    /// Distinct word types, marker included.
    pub vocab_size: usize,
    /// Share of a spreader's posts that contain the marker.
    pub marker_fraction: f64,
    pub min_words: usize,
    pub max_words: usize,
    /// Filler word `k` (0-based) is drawn with weight `1/(k+1)^s`; 0 gives a
    /// uniform draw.
    pub zipf_exponent: f64,
    pub languages: Vec<String>,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            authors: 40,
            posts_per_author: 8,
            vocab_size: 50,
            marker_fraction: 0.25,
            min_words: 2,
            max_words: 5,
            zipf_exponent: 1.0,
            languages: vec!["en".into(), "es".into()],
            seed: 1234,
        }
    }
}

pub const MARKER: &str = "zzmarker";

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Indices of marker-bearing posts per spreader.
    pub marker_posts: BTreeMap<String, Vec<usize>>,
}

impl SyntheticCorpus {
    pub fn filler_words(vocab_size: usize) -> Vec<String> {
        (0..vocab_size.saturating_sub(1)).map(|i| format!("w{i:02}")).collect()
    }
}

/// Authors alternate between labels and cycle through languages, so every
/// (language, label) cell gets an equal share when the counts divide evenly.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.vocab_size < 2 || cfg.posts_per_author == 0 || cfg.authors < 2 || cfg.languages.is_empty() {
        return Err(Error::Config("synthetic corpus needs ≥2 authors, ≥1 post, ≥2 word types and a language".into()));
    }
    if cfg.min_words == 0 || cfg.min_words > cfg.max_words {
        return Err(Error::Config("need 1 ≤ min_words ≤ max_words".into()));
    }
    if !(0.0..=1.0).contains(&cfg.marker_fraction) {
        return Err(Error::Config("marker_fraction outside [0, 1]".into()));
    }
    let words = SyntheticCorpus::filler_words(cfg.vocab_size);
    let filler = WeightedIndex::new((0..words.len()).map(|k| (k as f64 + 1.0).powf(-cfg.zipf_exponent)))
        .map_err(|e| Error::Config(format!("filler distribution: {e}")))?;
    let marked_per_author = ((cfg.posts_per_author as f64 * cfg.marker_fraction).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut profiles = Vec::with_capacity(cfg.authors);
    let mut marker_posts = BTreeMap::new();
    for a in 0..cfg.authors {
        let label = if a % 2 == 0 { Label::Normal } else { Label::Spreader };
        let language = &cfg.languages[(a / 2) % cfg.languages.len()];
        let id = format!("{language}{a:03}");
        let mut marked: Vec<usize> = Vec::new();
        if label == Label::Spreader {
            marked = sample(&mut rng, cfg.posts_per_author, marked_per_author.min(cfg.posts_per_author)).into_vec();
            marked.sort_unstable();
        }
        let posts = (0..cfg.posts_per_author)
            .map(|i| {
                let n = rng.gen_range(cfg.min_words..=cfg.max_words);
                let mut tokens: Vec<&str> = (0..n).map(|_| words[filler.sample(&mut rng)].as_str()).collect();
                if marked.contains(&i) {
                    let at = rng.gen_range(0..=tokens.len());
                    tokens.insert(at, MARKER);
                }
                Post::from_raw(&tokens.join(" "))
            })
            .collect();
        if label == Label::Spreader {
            marker_posts.insert(id.clone(), marked);
        }
        profiles.push(AuthorProfile::new(id, language.as_str(), posts, Some(label))?);
    }
    Ok(SyntheticCorpus {
        corpus: Corpus::new(profiles)?,
        marker_posts,
    })
}

/// Small toy-encoder model that trains on a synthetic corpus in seconds.
pub fn desk_model_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            max_post_len: 12,
            vocab_size: 0,
            dropout_p: 0.1,
        },
        ..ModelConfig::default()
    }
}

/// Desk-scale optimisation: a much larger learning rate than the full-scale
/// default, and more epochs.
pub fn desk_hyperparams() -> Hyperparams {
    Hyperparams {
        learning_rate: 1e-2,
        epochs: 20,
        ..Hyperparams::default()
    }
}
