use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

/// Splits authors into `k` folds, stratified per (language, label) cell.
///
/// Each cell is shuffled with the seed and dealt round-robin; the dealing
/// counter carries over between cells so fold sizes stay balanced overall.
/// Author lists inside a split keep corpus order.
pub fn stratified_kfold(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut cells: BTreeMap<(String, Label), Vec<&str>> = BTreeMap::new();
    let mut class_counts = [0usize; 2];
    for p in corpus.profiles() {
        let label = p.require_label()?;
        class_counts[label.index()] += 1;
        cells.entry((p.language.clone(), label)).or_default().push(&p.author_id);
    }
    let smallest = class_counts.iter().copied().min().unwrap_or(0);
    if k > smallest {
        return Err(Error::Config(format!(
            "{k} folds but the smallest class has {smallest} authors"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut dealt = 0usize;
    for ids in cells.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            fold_of.insert(id, dealt % k);
            dealt += 1;
        }
    }

    Ok((0..k)
        .map(|fold| {
            let (validation, train) = corpus
                .profiles()
                .iter()
                .map(|p| p.author_id.clone())
                .partition(|id| fold_of[id.as_str()] == fold);
            FoldSplit { fold, train, validation }
        })
        .collect())
}
