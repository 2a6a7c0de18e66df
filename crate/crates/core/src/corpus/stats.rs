use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Corpus, Label};
use crate::error::Result;

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
            count: values.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageStats {
    pub language: String,
    pub total_profiles: usize,
    pub spreaders: usize,
    pub posts_per_profile: f64,
    /// Post length in tokens.
    pub spreader_post_len: MeanStd,
    pub normal_post_len: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub languages: Vec<LanguageStats>,
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    let mut by_lang: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for p in corpus.profiles() {
        let label = p.require_label()?;
        by_lang.entry(p.language.as_str()).or_default().push((p, label));
    }
    let languages = by_lang
        .into_iter()
        .map(|(lang, profiles)| {
            let lengths = |want: Label| -> Vec<f64> {
                profiles
                    .iter()
                    .filter(|(_, l)| *l == want)
                    .flat_map(|(p, _)| p.posts.iter().map(|post| post.tokens.len() as f64))
                    .collect()
            };
            let posts: usize = profiles.iter().map(|(p, _)| p.posts.len()).sum();
            LanguageStats {
                language: lang.to_owned(),
                total_profiles: profiles.len(),
                spreaders: profiles.iter().filter(|(_, l)| *l == Label::Spreader).count(),
                posts_per_profile: posts as f64 / profiles.len() as f64,
                spreader_post_len: MeanStd::of(&lengths(Label::Spreader)),
                normal_post_len: MeanStd::of(&lengths(Label::Normal)),
            }
        })
        .collect();
    Ok(CorpusStats { languages })
}

fn count_cell(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

impl CorpusStats {
    /// Aligned text table, one column per language.
    pub fn to_table(&self) -> String {
        let rows: Vec<(&str, Vec<String>)> = vec![
            (
                "#Total Profiles",
                self.languages.iter().map(|l| l.total_profiles.to_string()).collect(),
            ),
            (
                "#Hate Speech Spreaders",
                self.languages.iter().map(|l| l.spreaders.to_string()).collect(),
            ),
            (
                "#Posts per Profile",
                self.languages.iter().map(|l| count_cell(l.posts_per_profile)).collect(),
            ),
            (
                "Post length (tokens), spreaders",
                self.languages
                    .iter()
                    .map(|l| format!("{:.2} ± {:.2}", l.spreader_post_len.mean, l.spreader_post_len.std))
                    .collect(),
            ),
            (
                "Post length (tokens), normal",
                self.languages
                    .iter()
                    .map(|l| format!("{:.2} ± {:.2}", l.normal_post_len.mean, l.normal_post_len.std))
                    .collect(),
            ),
        ];
        let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(5);
        let col_w = rows
            .iter()
            .flat_map(|(_, cells)| cells.iter().map(|c| c.chars().count()))
            .chain(self.languages.iter().map(|l| l.language.len()))
            .max()
            .unwrap_or(2);
        let mut out = String::new();
        let _ = write!(out, "{:<label_w$}", "Stats");
        for l in &self.languages {
            let _ = write!(out, "  {:>col_w$}", l.language);
        }
        out.push('\n');
        for (label, cells) in rows {
            let _ = write!(out, "{label:<label_w$}");
            for c in cells {
                let _ = write!(out, "  {c:>col_w$}");
            }
            out.push('\n');
        }
        out
    }
}
