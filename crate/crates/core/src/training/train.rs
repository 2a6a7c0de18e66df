use std::collections::BTreeMap;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adamw::{AdamW, AdamWConfig};
use super::bundle::ModelBundle;
use super::folds::{stratified_kfold, FoldSplit};
use super::metrics::{compute_metrics, MetricSet};
use super::report::{CvReport, FoldMetrics};
use crate::autograd::{ForwardMode, Graph};
use crate::corpus::{build_vocab, AuthorProfile, Corpus, Label};
use crate::encoder::PrecomputedEmbeddingStore;
use crate::error::{Error, Result};
use crate::model::{EncoderMode, Model, ModelConfig, Prediction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub folds: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub freeze_encoder: bool,
    /// Minimum token count for the toy encoder's vocabulary.
    pub min_token_freq: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 1e-5,
            batch_size: 2,
            epochs: 5,
            folds: 5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 1234,
            freeze_encoder: false,
            min_token_freq: 1,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.min_token_freq == 0 {
            return Err(Error::Config("min_token_freq must be at least 1".into()));
        }
        self.adamw().validate()
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    /// Seed used for the model of fold `fold` (`None`: whole-corpus model).
    pub fn model_seed(&self, fold: Option<usize>) -> u64 {
        match fold {
            Some(f) => self.seed.wrapping_add(1 + f as u64),
            None => self.seed,
        }
    }
}

/// Corpus plus the optional embedding store consulted in precomputed mode.
#[derive(Clone, Copy, Debug)]
pub struct TrainingData<'a> {
    pub corpus: &'a Corpus,
    pub embeddings: Option<&'a PrecomputedEmbeddingStore>,
}

/// Trains a model on the authors in `train_ids`. Single-threaded and
/// deterministic for a fixed seed.
pub fn train_model(
    data: TrainingData<'_>,
    train_ids: &[String],
    config: &ModelConfig,
    hp: &Hyperparams,
    seed: u64,
) -> Result<Model> {
    hp.validate()?;
    let train = data.corpus.select(train_ids)?;
    if train.is_empty() {
        return Err(Error::Input("no training authors".into()));
    }
    let vocab = match config.encoder_mode {
        EncoderMode::Toy => Some(build_vocab(&train, hp.min_token_freq)?),
        EncoderMode::Precomputed => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(config.clone(), vocab, &mut rng)?;

    let mut examples = Vec::with_capacity(train.len());
    for p in train.profiles() {
        let mut input = model.prepare(p, data.embeddings)?;
        if hp.freeze_encoder {
            input = model.freeze_input(input)?;
        }
        examples.push((input, p.require_label()?));
    }
    let ids = model.trainable_ids(hp.freeze_encoder);
    let mut opt = AdamW::new(hp.adamw(), &model.store, &ids)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut step = 0usize;
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hp.batch_size) {
            model.store.zero_grad();
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let (input, label) = &examples[i];
                let mut g = Graph::new();
                let mut mode = ForwardMode::Train(ChaCha8Rng::seed_from_u64(rng.gen()));
                let out = model.forward(&mut g, input, &mut mode)?;
                let loss = g.softmax_cross_entropy(out.logits, label.index())?;
                let value = g.value(loss).data()[0];
                if !value.is_finite() {
                    return Err(Error::Diverged { step, loss: value });
                }
                epoch_loss += value;
                let scaled = g.scale(loss, weight);
                g.backward(scaled, &mut model.store)?;
            }
            opt.step(&mut model.store)?;
            step += 1;
        }
        debug!(
            "epoch {}/{}: mean loss {:.6}",
            epoch + 1,
            hp.epochs,
            epoch_loss / examples.len() as f64
        );
    }
    Ok(model)
}

/// Eval-mode predictions for `profiles`, in order. Runs in parallel across
/// authors on the current rayon pool.
pub fn predict_profiles(
    model: &Model,
    profiles: &[AuthorProfile],
    embeddings: Option<&PrecomputedEmbeddingStore>,
) -> Result<Vec<Prediction>> {
    profiles
        .par_iter()
        .map(|p| model.predict(&model.prepare(p, embeddings)?))
        .collect()
}

pub fn evaluate(
    model: &Model,
    profiles: &[AuthorProfile],
    embeddings: Option<&PrecomputedEmbeddingStore>,
) -> Result<MetricSet> {
    let preds = predict_profiles(model, profiles, embeddings)?;
    let labels = profiles.iter().map(AuthorProfile::require_label).collect::<Result<Vec<_>>>()?;
    compute_metrics(&labels, &preds.iter().map(|p| p.label).collect::<Vec<_>>())
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub bundle: ModelBundle,
    pub metrics: FoldMetrics,
}

/// Trains on the split's training authors and scores the validation
/// authors with the model as it is stored in the bundle.
pub fn train_fold(
    data: TrainingData<'_>,
    split: &FoldSplit,
    config: &ModelConfig,
    hp: &Hyperparams,
) -> Result<FoldOutcome> {
    let seed = hp.model_seed(Some(split.fold));
    let model = train_model(data, &split.train, config, hp, seed)?;
    let bundle = ModelBundle::from_model(&model, Some(split.fold), seed, hp.freeze_encoder);
    let model = bundle.to_model()?;

    let validation = data.corpus.select(&split.validation)?;
    let preds = predict_profiles(&model, validation.profiles(), data.embeddings)?;
    let mut by_lang: BTreeMap<String, (Vec<Label>, Vec<Label>)> = BTreeMap::new();
    let mut all = (Vec::new(), Vec::new());
    for (p, pred) in validation.profiles().iter().zip(&preds) {
        let truth = p.require_label()?;
        let entry = by_lang.entry(p.language.clone()).or_default();
        entry.0.push(truth);
        entry.1.push(pred.label);
        all.0.push(truth);
        all.1.push(pred.label);
    }
    let metrics = compute_metrics(&all.0, &all.1)?;
    let per_language = by_lang
        .into_iter()
        .map(|(lang, (y, p))| compute_metrics(&y, &p).map(|m| (lang, m)))
        .collect::<Result<_>>()?;
    info!(
        "fold {}: accuracy {:.4}, f1_macro {:.4} on {} authors",
        split.fold,
        metrics.accuracy,
        metrics.f1_macro,
        split.validation.len()
    );
    Ok(FoldOutcome {
        bundle,
        metrics: FoldMetrics {
            fold: split.fold,
            validation_size: split.validation.len(),
            metrics,
            per_language,
        },
    })
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub report: CvReport,
    pub bundles: Vec<ModelBundle>,
    pub splits: Vec<FoldSplit>,
}

/// Stratified k-fold cross-validation; one bundle per fold.
pub fn cross_validate(data: TrainingData<'_>, config: &ModelConfig, hp: &Hyperparams) -> Result<CvOutcome> {
    hp.validate()?;
    let splits = stratified_kfold(data.corpus, hp.folds, hp.seed)?;
    let mut bundles = Vec::with_capacity(splits.len());
    let mut folds = Vec::with_capacity(splits.len());
    for split in &splits {
        let outcome = train_fold(data, split, config, hp)?;
        bundles.push(outcome.bundle);
        folds.push(outcome.metrics);
    }
    Ok(CvOutcome {
        report: CvReport::new(folds),
        bundles,
        splits,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub label: Label,
    /// Votes for [normal, spreader].
    pub counts: [usize; 2],
    /// True when the counts were equal and the label fell back to normal.
    pub tie: bool,
}

/// Majority label; a tie goes to [`Label::Normal`] and is flagged.
pub fn majority_vote(labels: &[Label]) -> Vote {
    let mut counts = [0usize; 2];
    for l in labels {
        counts[l.index()] += 1;
    }
    let tie = counts[0] == counts[1];
    Vote {
        label: if counts[1] > counts[0] { Label::Spreader } else { Label::Normal },
        counts,
        tie,
    }
}

/// Every model predicts the profile independently; the majority label wins.
pub fn predict_ensemble(
    models: &[Model],
    profile: &AuthorProfile,
    embeddings: Option<&PrecomputedEmbeddingStore>,
) -> Result<(Vote, Vec<Prediction>)> {
    if models.is_empty() {
        return Err(Error::Input("ensemble needs at least one model".into()));
    }
    let preds = models
        .iter()
        .map(|m| m.predict(&m.prepare(profile, embeddings)?))
        .collect::<Result<Vec<_>>>()?;
    let vote = majority_vote(&preds.iter().map(|p| p.label).collect::<Vec<_>>());
    Ok((vote, preds))
}
