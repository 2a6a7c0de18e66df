//! Author feeds: ingestion, normalization, tokenization and statistics.

mod pan;
mod stats;
pub mod text;
mod vocab;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pan::{load_pan_directory, load_truth, write_pan_directory};
pub use stats::{corpus_stats, CorpusStats, LanguageStats, MeanStd};
pub use text::{normalize_tags, tokenize, POST_END, POST_START, SPECIAL_TAGS};
pub use vocab::{build_vocab, Vocabulary, PAD, PAD_ID, RESERVED, UNK, UNK_ID};

/// Binary author label. Serialized as 0 / 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Normal,
    Spreader,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Spreader => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Label::Normal),
            1 => Ok(Label::Spreader),
            other => Err(Error::Input(format!("label {other} is not 0 or 1"))),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.index() as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Label::from_index(usize::from(v))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub raw_text: String,
    pub normalized_text: String,
    pub tokens: Vec<String>,
}

impl Post {
    pub fn from_raw(raw: &str) -> Self {
        let normalized_text = normalize_tags(raw);
        let tokens = tokenize(&normalized_text);
        Post {
            raw_text: raw.to_owned(),
            normalized_text,
            tokens,
        }
    }
}

/// A post mapped to vocabulary ids, padded to a fixed length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedPost {
    pub token_ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
}

impl EncodedPost {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.attention_mask.iter().map(|&m| m == 1).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthorProfile {
    pub author_id: String,
    pub language: String,
    pub posts: Vec<Post>,
    pub label: Option<Label>,
}

impl AuthorProfile {
    pub fn new(
        author_id: impl Into<String>,
        language: impl Into<String>,
        posts: Vec<Post>,
        label: Option<Label>,
    ) -> Result<Self> {
        let author_id = author_id.into();
        if posts.is_empty() {
            return Err(Error::Input(format!("author {author_id} has no posts")));
        }
        Ok(AuthorProfile {
            author_id,
            language: language.into(),
            posts,
            label,
        })
    }

    pub fn require_label(&self) -> Result<Label> {
        self.label
            .ok_or_else(|| Error::Input(format!("author {} is unlabeled", self.author_id)))
    }
}

/// An immutable collection of author profiles with unique ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CorpusRepr")]
pub struct Corpus {
    profiles: Vec<AuthorProfile>,
}

#[derive(Deserialize)]
struct CorpusRepr {
    profiles: Vec<AuthorProfile>,
}

impl TryFrom<CorpusRepr> for Corpus {
    type Error = Error;
    fn try_from(r: CorpusRepr) -> Result<Self> {
        Corpus::new(r.profiles)
    }
}

impl Corpus {
    pub fn new(profiles: Vec<AuthorProfile>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut dups = BTreeSet::new();
        for p in &profiles {
            if p.posts.is_empty() {
                return Err(Error::Input(format!("author {} has no posts", p.author_id)));
            }
            if !seen.insert(p.author_id.as_str()) {
                dups.insert(p.author_id.clone());
            }
        }
        if !dups.is_empty() {
            return Err(Error::Consistency(format!(
                "duplicate author ids: {}",
                dups.into_iter().collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(Corpus { profiles })
    }

    pub fn profiles(&self) -> &[AuthorProfile] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn languages(&self) -> BTreeSet<String> {
        self.profiles.iter().map(|p| p.language.clone()).collect()
    }

    pub fn get(&self, author_id: &str) -> Option<&AuthorProfile> {
        self.profiles.iter().find(|p| p.author_id == author_id)
    }

    pub fn post_count(&self) -> usize {
        self.profiles.iter().map(|p| p.posts.len()).sum()
    }

    /// Concatenates two corpora; author ids must stay unique.
    pub fn merge(self, other: Corpus) -> Result<Corpus> {
        let mut profiles = self.profiles;
        profiles.extend(other.profiles);
        Corpus::new(profiles)
    }

    /// Subset in the order of `ids`.
    pub fn select(&self, ids: &[String]) -> Result<Corpus> {
        let profiles = ids
            .iter()
            .map(|id| {
                self.get(id)
                    .cloned()
                    .ok_or_else(|| Error::Lookup(format!("author {id} not in corpus")))
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(profiles)
    }

    pub fn filter_language(&self, language: &str) -> Corpus {
        Corpus {
            profiles: self
                .profiles
                .iter()
                .filter(|p| p.language == language)
                .cloned()
                .collect(),
        }
    }

    /// Joins truth labels by author id. Every profile must receive a label and
    /// every truth id must name a profile.
    pub fn with_truth(mut self, truth: &BTreeMap<String, Label>) -> Result<Corpus> {
        let ids: HashSet<&str> = self.profiles.iter().map(|p| p.author_id.as_str()).collect();
        let unknown: Vec<&str> = truth
            .keys()
            .map(String::as_str)
            .filter(|id| !ids.contains(id))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Consistency(format!(
                "truth ids missing from corpus: {}",
                unknown.join(", ")
            )));
        }
        let unlabeled: Vec<&str> = self
            .profiles
            .iter()
            .map(|p| p.author_id.as_str())
            .filter(|id| !truth.contains_key(*id))
            .collect();
        if !unlabeled.is_empty() {
            return Err(Error::Consistency(format!(
                "authors without a truth label: {}",
                unlabeled.join(", ")
            )));
        }
        for p in &mut self.profiles {
            p.label = truth.get(&p.author_id).copied();
        }
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Corpus> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Concatenates an author's posts into one encoded sequence, optionally
/// wrapping each post in `[POSTSTART]` / `[POSTEND]`.
pub fn join_posts(
    profile: &AuthorProfile,
    vocab: &Vocabulary,
    max_len: usize,
    with_markers: bool,
) -> Result<EncodedPost> {
    let mut tokens: Vec<&str> = Vec::new();
    for post in &profile.posts {
        if with_markers {
            tokens.push(POST_START);
        }
        tokens.extend(post.tokens.iter().map(String::as_str));
        if with_markers {
            tokens.push(POST_END);
        }
    }
    vocab.encode(&tokens, max_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(id: &str, texts: &[&str]) -> AuthorProfile {
        AuthorProfile::new(id, "en", texts.iter().map(|t| Post::from_raw(t)).collect(), None)
            .unwrap()
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::new(vec![profile("a", &["x"]), profile("a", &["y"])]);
        assert!(matches!(err, Err(Error::Consistency(_))));
        let merged = Corpus::new(vec![profile("a", &["x"])])
            .unwrap()
            .merge(Corpus::new(vec![profile("a", &["y"])]).unwrap());
        assert!(matches!(merged, Err(Error::Consistency(_))));
    }

    #[test]
    fn empty_feed_rejected() {
        assert!(AuthorProfile::new("a", "en", vec![], None).is_err());
    }

    #[test]
    fn truth_join_checks_both_directions() {
        let corpus = Corpus::new(vec![profile("a", &["x"]), profile("b", &["y"])]).unwrap();
        let empty = BTreeMap::new();
        assert!(matches!(corpus.clone().with_truth(&empty), Err(Error::Consistency(_))));

        let mut extra = BTreeMap::new();
        extra.insert("a".to_string(), Label::Spreader);
        extra.insert("b".to_string(), Label::Normal);
        extra.insert("ghost".to_string(), Label::Normal);
        let err = corpus.clone().with_truth(&extra).unwrap_err().to_string();
        assert!(err.contains("ghost"), "{err}");

        extra.remove("ghost");
        let labeled = corpus.with_truth(&extra).unwrap();
        assert_eq!(labeled.get("a").unwrap().label, Some(Label::Spreader));
    }

    #[test]
    fn json_roundtrip() {
        let mut c = Corpus::new(vec![profile("a", &["RT #USER# hi", "#URL#"])]).unwrap();
        c.profiles[0].label = Some(Label::Spreader);
        let back = Corpus::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(c.to_json().unwrap().contains("\"label\": 1"));
    }

    #[test]
    fn join_with_and_without_markers() {
        let p = profile("a", &["hello world", "bye"]);
        let vocab = Vocabulary::from_tokens(["hello", "world", "bye"].map(String::from));
        let joined = join_posts(&p, &vocab, 500, true).unwrap();
        let expected = [
            POST_START, "hello", "world", POST_END, POST_START, "bye", POST_END,
        ]
        .map(|t| vocab.id(t));
        assert_eq!(&joined.token_ids[..7], &expected);
        assert_eq!(joined.real_len(), 7);
        assert_eq!(joined.len(), 500);

        let plain = join_posts(&p, &vocab, 500, false).unwrap();
        assert_eq!(
            &plain.token_ids[..3],
            &["hello", "world", "bye"].map(|t| vocab.id(t))
        );
        assert_eq!(plain.real_len(), 3);

        let truncated = join_posts(&p, &vocab, 2, true).unwrap();
        assert_eq!(truncated.token_ids, vec![vocab.id(POST_START), vocab.id("hello")]);
    }

    #[test]
    fn join_single_empty_post() {
        let p = profile("a", &[""]);
        let vocab = Vocabulary::default();
        let joined = join_posts(&p, &vocab, 8, true).unwrap();
        assert_eq!(joined.attention_mask, vec![1, 1, 0, 0, 0, 0, 0, 0]);
        let plain = join_posts(&p, &vocab, 8, false).unwrap();
        assert_eq!(plain.real_len(), 0);
    }
}
