use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::Label;
use crate::error::Error;
use crate::model::ModelConfig;
use crate::synthetic::{desk_hyperparams, desk_model_config, generate, SyntheticConfig};

fn synthetic() -> crate::synthetic::SyntheticCorpus {
    generate(&SyntheticConfig::default()).unwrap()
}

#[test]
fn majority_vote_examples() {
    let l = |v: &[usize]| v.iter().map(|&i| Label::from_index(i).unwrap()).collect::<Vec<_>>();
    let v = majority_vote(&l(&[1, 1, 0, 1, 0]));
    assert_eq!((v.label, v.counts, v.tie), (Label::Spreader, [2, 3], false));
    let v = majority_vote(&l(&[0, 0, 0, 0, 0]));
    assert_eq!((v.label, v.tie), (Label::Normal, false));
    let v = majority_vote(&l(&[1, 0]));
    assert_eq!((v.label, v.tie), (Label::Normal, true));
    for mask in 0..32usize {
        let votes: Vec<usize> = (0..5).map(|b| (mask >> b) & 1).collect();
        assert!(!majority_vote(&l(&votes)).tie);
    }
}

#[test]
fn zero_epochs_leaves_initialisation() {
    let s = synthetic();
    let data = TrainingData {
        corpus: &s.corpus,
        embeddings: None,
    };
    let hp = Hyperparams {
        epochs: 0,
        ..desk_hyperparams()
    };
    let ids: Vec<String> = s.corpus.profiles().iter().map(|p| p.author_id.clone()).collect();
    let trained = train_model(data, &ids, &desk_model_config(), &hp, 5).unwrap();
    let vocab = crate::corpus::build_vocab(&s.corpus, 1).unwrap();
    let fresh = crate::model::Model::new(desk_model_config(), Some(vocab), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(
        ModelBundle::from_model(&trained, None, 5, false),
        ModelBundle::from_model(&fresh, None, 5, false)
    );
    let once = train_model(data, &ids, &desk_model_config(), &Hyperparams { epochs: 1, ..hp }, 5).unwrap();
    assert_ne!(
        ModelBundle::from_model(&trained, None, 5, false),
        ModelBundle::from_model(&once, None, 5, false)
    );
}

#[test]
fn same_seed_same_parameters() {
    let s = synthetic();
    let data = TrainingData {
        corpus: &s.corpus,
        embeddings: None,
    };
    let hp = Hyperparams {
        epochs: 2,
        ..desk_hyperparams()
    };
    let ids: Vec<String> = s.corpus.profiles().iter().take(10).map(|p| p.author_id.clone()).collect();
    let a = train_model(data, &ids, &desk_model_config(), &hp, 9).unwrap();
    let b = train_model(data, &ids, &desk_model_config(), &hp, 9).unwrap();
    for (pa, pb) in a.store.iter().zip(b.store.iter()) {
        assert_eq!(pa.value, pb.value, "{}", pa.name);
    }
}

#[test]
fn huge_learning_rate_diverges() {
    let s = synthetic();
    let data = TrainingData {
        corpus: &s.corpus,
        embeddings: None,
    };
    let hp = Hyperparams {
        learning_rate: 1e300,
        weight_decay: 0.0,
        epochs: 3,
        ..desk_hyperparams()
    };
    let ids: Vec<String> = s.corpus.profiles().iter().map(|p| p.author_id.clone()).collect();
    let err = train_model(data, &ids, &desk_model_config(), &hp, 1).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}

#[test]
fn separable_fold_is_learned() {
    let s = synthetic();
    let data = TrainingData {
        corpus: &s.corpus,
        embeddings: None,
    };
    let hp = desk_hyperparams();
    let splits = stratified_kfold(&s.corpus, hp.folds, hp.seed).unwrap();
    let out = train_fold(data, &splits[0], &desk_model_config(), &hp).unwrap();
    assert!(out.metrics.metrics.accuracy >= 0.95, "{:?}", out.metrics);
    assert_eq!(out.metrics.per_language.len(), 2);
}

#[test]
fn invalid_hyperparams() {
    let bad = Hyperparams {
        folds: 1,
        ..Hyperparams::default()
    };
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
    let bad = Hyperparams {
        batch_size: 0,
        ..Hyperparams::default()
    };
    assert!(bad.validate().is_err());
    let s = synthetic();
    let data = TrainingData {
        corpus: &s.corpus,
        embeddings: None,
    };
    assert!(train_model(data, &[], &ModelConfig::default(), &Hyperparams::default(), 0).is_err());
}
