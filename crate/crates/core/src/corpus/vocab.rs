use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::text::SPECIAL_TAGS;
use super::{Corpus, EncodedPost};
use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
/// Number of ids reserved ahead of corpus tokens.
pub const RESERVED: usize = 2 + SPECIAL_TAGS.len();

/// Token/id bijection. Ids `0..RESERVED` are fixed: PAD, UNK, then the
/// special tags in [`SPECIAL_TAGS`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        Vocabulary::from_tokens(r.tokens)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr { tokens: v.tokens }
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::from_tokens(Vec::new())
    }
}

impl Vocabulary {
    /// Builds a vocabulary from non-reserved tokens, in id order.
    pub fn from_tokens(extra: impl IntoIterator<Item = String>) -> Self {
        let mut tokens: Vec<String> = [PAD, UNK]
            .into_iter()
            .chain(SPECIAL_TAGS)
            .map(str::to_owned)
            .collect();
        let mut index: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for t in extra {
            if !index.contains_key(&t) {
                index.insert(t.clone(), tokens.len());
                tokens.push(t);
            }
        }
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to ids, truncates to `max_len` and right-pads with PAD.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> Result<EncodedPost> {
        if max_len == 0 {
            return Err(Error::Config("max_post_len must be at least 1".into()));
        }
        let mut token_ids: Vec<usize> = tokens
            .iter()
            .take(max_len)
            .map(|t| self.id(t.as_ref()))
            .collect();
        let real = token_ids.len();
        token_ids.resize(max_len, PAD_ID);
        let attention_mask = (0..max_len).map(|i| u8::from(i < real)).collect();
        Ok(EncodedPost {
            token_ids,
            attention_mask,
        })
    }
}

/// Tokens seen at least `min_freq` times, ordered by descending frequency
/// with lexicographic tie-breaking.
pub fn build_vocab(corpus: &Corpus, min_freq: usize) -> Result<Vocabulary> {
    if min_freq == 0 {
        return Err(Error::Config("min_freq must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for post in corpus.profiles().iter().flat_map(|p| &p.posts) {
        for t in &post.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_freq && t != PAD && t != UNK && !SPECIAL_TAGS.contains(&t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t.to_owned())))
}
