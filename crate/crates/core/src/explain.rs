//! Post-level and token-level explanations for one author, as JSON or a
//! static HTML heatmap.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AuthorProfile, Label, UNK};
use crate::encoder::PrecomputedEmbeddingStore;
use crate::error::{Error, Result};
use crate::model::{encode_tokens, BaselineMode, Model};
use crate::tensor::Tensor;
use crate::training::predict_ensemble;

/// Attention received by each real token of one post, summing to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenScoreRow {
    pub post_index: usize,
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPost {
    pub index: usize,
    pub text: String,
    /// `None` when the model has no post-level attention.
    pub weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub author_id: String,
    pub label: Label,
    pub probs: [f64; 2],
    /// Highest weight first; feed order when weights are unavailable.
    pub posts: Vec<RankedPost>,
    pub tokens: Vec<TokenScoreRow>,
    pub bundle_ids: Vec<String>,
}

/// Received attention per real token: heads are averaged, then real query
/// rows are averaged, pad keys dropped and the rest renormalised.
pub fn token_scores(attention: &Tensor, mask: &[bool]) -> Result<Vec<f64>> {
    let shape = attention.shape();
    let len = mask.len();
    if shape.len() != 3 || shape[1] != len || shape[2] != len {
        return Err(Error::dim("token_scores", shape, &[len, len]));
    }
    let queries = mask.iter().filter(|&&m| m).count();
    if queries == 0 {
        return Err(Error::Degenerate("post has no real tokens".into()));
    }
    let heads = shape[0];
    let mut received = vec![0.0; len];
    for h in 0..heads {
        for (q, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            let row = &attention.data()[(h * len + q) * len..(h * len + q + 1) * len];
            for (acc, v) in received.iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    let norm = (heads * queries) as f64;
    let kept: Vec<f64> = received
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v / norm)
        .collect();
    let total: f64 = kept.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("no attention reaches real tokens".into()));
    }
    Ok(kept.iter().map(|v| v / total).collect())
}

/// Ensemble label with mean class probabilities across models; post weights
/// and token scores come from the first model. `top_k` keeps only the
/// highest-ranked posts.
pub fn explain_author(
    models: &[Model],
    bundle_ids: &[String],
    profile: &AuthorProfile,
    embeddings: Option<&PrecomputedEmbeddingStore>,
    top_k: Option<usize>,
) -> Result<ExplanationReport> {
    let (vote, preds) = predict_ensemble(models, profile, embeddings)?;
    let n = preds.len() as f64;
    let probs = [
        preds.iter().map(|p| p.probs[0]).sum::<f64>() / n,
        preds.iter().map(|p| p.probs[1]).sum::<f64>() / n,
    ];
    let first = &models[0];
    let lead = &preds[0];
    let per_post = first.config().baseline == BaselineMode::PerPost;

    let weights: Option<Vec<f64>> = lead
        .post_weights
        .as_ref()
        .filter(|_| per_post)
        .map(|w| w.data().to_vec());
    let mut order: Vec<usize> = (0..profile.posts.len()).collect();
    if let Some(w) = &weights {
        order.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
    }
    if let Some(k) = top_k {
        order.truncate(k);
    }
    let posts = order
        .iter()
        .map(|&i| RankedPost {
            index: i,
            text: profile.posts[i].normalized_text.clone(),
            weight: weights.as_ref().map(|w| w[i]),
        })
        .collect();

    let mut tokens = Vec::new();
    if let (true, Some(vocab), false) = (per_post, first.vocab(), lead.token_attentions.is_empty()) {
        let max_len = first.config().encoder.max_post_len;
        for &i in &order {
            let post = &profile.posts[i];
            let encoded = encode_tokens(vocab, &post.tokens, max_len)?;
            let scores = token_scores(&lead.token_attentions[i], &encoded.mask())?;
            let shown: Vec<String> = if post.tokens.is_empty() {
                vec![UNK.to_string()]
            } else {
                post.tokens.iter().take(max_len).cloned().collect()
            };
            tokens.push(TokenScoreRow {
                post_index: i,
                tokens: shown,
                scores,
            });
        }
    }
    Ok(ExplanationReport {
        author_id: profile.author_id.clone(),
        label: vote.label,
        probs,
        posts,
        tokens,
        bundle_ids: bundle_ids.to_vec(),
    })
}

impl ExplanationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_html(&self) -> String {
        let mut h = String::new();
        let label = match self.label {
            Label::Spreader => "hate speech spreader",
            Label::Normal => "not a spreader",
        };
        let _ = write!(
            h,
            "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Explanation for {id}</title>\n\
             <style>\nbody{{font-family:sans-serif;max-width:60em;margin:2em auto;}}\n\
             section{{border-top:1px solid #ccc;padding:.5em 0;}}\n\
             .bar{{display:inline-block;height:.8em;background:#2a6fbb;}}\n\
             .tok{{padding:0 .15em;border-radius:.2em;}}\n</style>\n</head>\n<body>\n\
             <h1>{id}</h1>\n<p>Prediction: <b>{label}</b> (p(normal) = {p0:.4}, p(spreader) = {p1:.4})</p>\n\
             <p>Models: {models}</p>\n",
            id = escape(&self.author_id),
            p0 = self.probs[0],
            p1 = self.probs[1],
            models = escape(&self.bundle_ids.join(", ")),
        );
        if self.posts.iter().all(|p| p.weight.is_none()) {
            h.push_str("<p>Post weights are unavailable for this model.</p>\n");
        }
        for (rank, post) in self.posts.iter().enumerate() {
            let _ = write!(h, "<section class=\"post\" data-index=\"{}\">\n<h2>#{} post {}", post.index, rank + 1, post.index);
            if let Some(w) = post.weight {
                let _ = write!(
                    h,
                    " weight {w:.4} <span class=\"bar\" style=\"width:{:.1}em\"></span>",
                    (w * 20.0).max(0.05)
                );
            }
            h.push_str("</h2>\n");
            match self.tokens.iter().find(|row| row.post_index == post.index) {
                Some(row) => {
                    let peak = row.scores.iter().copied().fold(0.0, f64::max);
                    h.push_str("<p>");
                    for (tok, s) in row.tokens.iter().zip(&row.scores) {
                        let alpha = if peak > 0.0 { s / peak } else { 0.0 };
                        let _ = write!(
                            h,
                            "<span class=\"tok\" title=\"{s:.4}\" style=\"background:rgba(220,50,47,{alpha:.3})\">{}</span> ",
                            escape(tok)
                        );
                    }
                    h.push_str("</p>\n");
                }
                None => {
                    let _ = writeln!(h, "<p>{}</p>", escape(&post.text));
                }
            }
            h.push_str("</section>\n");
        }
        h.push_str("</body>\n</html>\n");
        h
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

pub fn emit_json(report: &ExplanationReport, path: &Path) -> Result<()> {
    std::fs::write(path, report.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn emit_html(report: &ExplanationReport, path: &Path) -> Result<()> {
    std::fs::write(path, report.to_html()).map_err(|e| Error::io(path, e))
}
