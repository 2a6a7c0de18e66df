//! End-to-end acceptance checks. Each test prints a single
//! `[PASS]`/`[FAIL]` line before asserting.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spreader_profiler::attention::{AttentionHead, PoolingMode};
use spreader_profiler::autograd::ParamStore;
use spreader_profiler::corpus::{load_pan_directory, normalize_tags, Corpus, Label};
use spreader_profiler::encoder::PrecomputedEmbeddingStore;
use spreader_profiler::explain::explain_author;
use spreader_profiler::gradsuite::{registry, run_suite, TOLERANCE};
use spreader_profiler::model::Model;
use spreader_profiler::synthetic::{desk_hyperparams, desk_model_config, generate, SyntheticConfig, SyntheticCorpus};
use spreader_profiler::training::{
    compute_metrics, cross_validate, predict_ensemble, stratified_kfold, CvOutcome, CvReport, FoldMetrics,
    Hyperparams, MetricSet, ModelBundle, TrainingData,
};
use spreader_profiler::{Error, Tensor};

fn report(criterion: u32, name: &str, passed: bool, detail: impl AsRef<str>) {
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {criterion:>2} {name}: {}", detail.as_ref());
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn synthetic_run(seed: u64) -> (SyntheticCorpus, Hyperparams, CvOutcome, Duration) {
    let s = generate(&SyntheticConfig { seed, ..SyntheticConfig::default() }).unwrap();
    let hp = Hyperparams { seed, ..desk_hyperparams() };
    let start = Instant::now();
    let cv = single_thread(|| {
        let data = TrainingData { corpus: &s.corpus, embeddings: None };
        cross_validate(data, &desk_model_config(), &hp).unwrap()
    });
    (s, hp, cv, start.elapsed())
}

/// The cross-validation at seed 1234, shared by several checks.
fn default_run() -> &'static (SyntheticCorpus, Hyperparams, CvOutcome, Duration) {
    static RUN: OnceLock<(SyntheticCorpus, Hyperparams, CvOutcome, Duration)> = OnceLock::new();
    RUN.get_or_init(|| synthetic_run(1234))
}

#[test]
fn criterion_01_gradient_suite() {
    let start = Instant::now();
    let suite = run_suite(0, 50).unwrap();
    let elapsed = start.elapsed();
    let names: BTreeSet<_> = suite.ops.iter().map(|o| o.name.as_str()).collect();
    let worst = suite.ops.iter().map(|o| o.max_rel_error).fold(0.0, f64::max);
    let complete = registry().iter().all(|(n, _)| names.contains(n)) && names.contains("composed_model");
    let all_seeds = suite.ops.iter().all(|o| o.seeds >= 50);
    let ok = suite.passed && worst < TOLERANCE && complete && all_seeds && elapsed < Duration::from_secs(60);
    report(
        1,
        "gradient suite",
        ok,
        format!("{} checks x 50 seeds, worst relative error {worst:.2e}, {:.1}s", names.len(), elapsed.as_secs_f64()),
    );
    if !ok {
        println!("{}", suite.to_table());
    }
    assert!(ok);
}

/// Row-softmax pooling written out with plain loops.
fn naive_pool(hp: &[Vec<f64>], wap: &[f64], bias: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = hp.len();
    let d = bias.len();
    let hap: Vec<Vec<f64>> = hp
        .iter()
        .map(|row| (0..d).map(|j| bias[j] + (0..d).map(|k| row[k] * wap[k * d + j]).sum::<f64>()).collect())
        .collect();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        let scores: Vec<f64> = (0..n).map(|j| (0..d).map(|k| hp[i][k] * hap[j][k]).sum()).collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
        for j in 0..n {
            a[i][j] = (scores[j] - m).exp() / z;
        }
    }
    let mut v = vec![0.0; d];
    for i in 0..n {
        for j in 0..n {
            for k in 0..d {
                v[k] += a[i][j] * hap[j][k] / n as f64;
            }
        }
    }
    let w = (0..n).map(|j| (0..n).map(|i| a[i][j]).sum::<f64>() / n as f64).collect();
    (a, v, w)
}

#[test]
fn criterion_02_attention_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=16);
        let d = rng.gen_range(1..=32);
        let mut store = ParamStore::new();
        let head = AttentionHead::new(d, &mut store, &mut rng);
        let bias: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        store.get_mut(head.bias).value = Tensor::vector(bias.clone());
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let hp = Tensor::from_rows(&rows).unwrap();
        let out = head.attend_profile(&store, &hp, PoolingMode::Attention).unwrap();
        let a = out.attention.unwrap();
        let w = out.post_weights.unwrap();

        for r in a.rows() {
            worst = worst.max((r.iter().sum::<f64>() - 1.0).abs());
        }
        worst = worst.max((w.data().iter().sum::<f64>() - 1.0).abs());

        let (na, nv, nw) = naive_pool(&rows, store.get(head.wap).value.data(), &bias);
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((a.at(i, j) - na[i][j]).abs());
            }
        }
        worst = worst.max(out.author_vector.data().iter().zip(&nv).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        worst = worst.max(w.data().iter().zip(&nw).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let permuted = Tensor::from_rows(&perm.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>()).unwrap();
        let pout = head.attend_profile(&store, &permuted, PoolingMode::Attention).unwrap();
        worst = worst.max(pout.author_vector.max_abs_diff(&out.author_vector));
        let pw = pout.post_weights.unwrap();
        for (k, &i) in perm.iter().enumerate() {
            worst = worst.max((pw.data()[k] - w.data()[i]).abs());
        }
    }
    let ok = worst <= 1e-9;
    report(2, "attention invariants", ok, format!("200 configurations, max deviation {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_03_mean_ablation_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.gen_range(1..=16);
        let d = rng.gen_range(1..=32);
        let mut store = ParamStore::new();
        let head = AttentionHead::new(d, &mut store, &mut rng);
        store.get_mut(head.wap).value = Tensor::identity(d);
        store.get_mut(head.bias).value = Tensor::zeros(&[d]);
        let row: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let hp = Tensor::from_rows(&vec![row; n]).unwrap();
        let att = head.attend_profile(&store, &hp, PoolingMode::Attention).unwrap();
        let mean = head.attend_profile(&store, &hp, PoolingMode::Mean).unwrap();
        worst = worst.max(att.author_vector.max_abs_diff(&mean.author_vector));
    }
    let ok = worst <= 1e-9;
    report(3, "mean ablation equivalence", ok, format!("50 profiles, max difference {worst:.2e}"));
    assert!(ok);
}

fn accuracy(models: &[Model], corpus: &Corpus) -> f64 {
    let mut right = 0;
    for p in corpus.profiles() {
        let (vote, _) = predict_ensemble(models, p, None).unwrap();
        right += usize::from(Some(vote.label) == p.label);
    }
    right as f64 / corpus.len() as f64
}

/// L2-regularised logistic regression on token counts, fitted by full-batch
/// gradient descent. Shows how learnable a fixture is for a plain linear
/// model on the same folds.
fn linear_baseline_accuracy(corpus: &Corpus, cv: &CvOutcome) -> f64 {
    let types: Vec<&str> = corpus
        .profiles()
        .iter()
        .flat_map(|p| p.posts.iter().flat_map(|post| post.tokens.iter().map(String::as_str)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let features = |id: &str| {
        let mut x = vec![0.0; types.len() + 1];
        x[types.len()] = 1.0;
        for post in &corpus.get(id).unwrap().posts {
            for t in &post.tokens {
                x[types.binary_search(&t.as_str()).unwrap()] += 1.0;
            }
        }
        x
    };
    let target = |id: &str| f64::from(u8::from(corpus.get(id).unwrap().label == Some(Label::Spreader)));
    let mut accs = Vec::new();
    for split in &cv.splits {
        let xs: Vec<Vec<f64>> = split.train.iter().map(|id| features(id)).collect();
        let ys: Vec<f64> = split.train.iter().map(|id| target(id)).collect();
        let mut w = vec![0.0; types.len() + 1];
        for _ in 0..3000 {
            let mut grad: Vec<f64> = w.iter().map(|wi| wi / xs.len() as f64).collect();
            for (x, y) in xs.iter().zip(&ys) {
                let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
                let err = 1.0 / (1.0 + (-z).exp()) - y;
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += err * xi / xs.len() as f64;
                }
            }
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= 0.5 * g;
            }
        }
        let right = split
            .validation
            .iter()
            .filter(|id| {
                let z: f64 = features(id).iter().zip(&w).map(|(a, b)| a * b).sum();
                (z > 0.0) == (target(id) == 1.0)
            })
            .count();
        accs.push(right as f64 / split.validation.len() as f64);
    }
    accs.iter().sum::<f64>() / accs.len() as f64
}

#[test]
fn criterion_04_synthetic_separation() {
    let (s, hp, cv, elapsed) = default_run();
    let mean = cv.report.summary.accuracy.mean;
    let models: Vec<Model> = cv.bundles.iter().map(|b| b.to_model().unwrap()).collect();
    let ensemble = accuracy(&models, &s.corpus);
    let best = models
        .iter()
        .map(|m| accuracy(std::slice::from_ref(m), &s.corpus))
        .fold(0.0, f64::max);
    let linear = linear_baseline_accuracy(&s.corpus, cv);
    let ok = mean >= 0.95 && ensemble >= best - 0.05 && hp.epochs <= 30 && *elapsed < Duration::from_secs(300);
    report(
        4,
        "synthetic separation",
        ok,
        format!(
            "mean fold accuracy {mean:.3} (linear token-count baseline {linear:.3}), ensemble {ensemble:.3} vs best fold model {best:.3} on all authors, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

/// Share of validation spreaders whose top-ranked quarter of posts holds a
/// marker post, each explained by the model that did not train on them.
fn marker_hit_rate(s: &SyntheticCorpus, cv: &CvOutcome) -> f64 {
    let mut hits = 0;
    let mut total = 0;
    for (split, bundle) in cv.splits.iter().zip(&cv.bundles) {
        let model = bundle.to_model().unwrap();
        let models = [model];
        let ids = [bundle.id()];
        for id in &split.validation {
            let Some(marked) = s.marker_posts.get(id) else { continue };
            let profile = s.corpus.get(id).unwrap();
            let top = (profile.posts.len() as f64 * 0.25).ceil() as usize;
            let r = explain_author(&models, &ids, profile, None, None).unwrap();
            total += 1;
            hits += usize::from(r.posts.iter().take(top).any(|p| marked.contains(&p.index)));
        }
    }
    hits as f64 / total as f64
}

#[test]
fn criterion_05_explanation_fidelity() {
    let mut passed = 0;
    let mut rates = Vec::new();
    for seed in 1234..1239 {
        let rate = if seed == 1234 {
            let (s, _, cv, _) = default_run();
            marker_hit_rate(s, cv)
        } else {
            let (s, _, cv, _) = synthetic_run(seed);
            marker_hit_rate(&s, &cv)
        };
        passed += usize::from(rate >= 0.8);
        rates.push(format!("{rate:.2}"));
    }
    let ok = passed >= 4;
    report(
        5,
        "explanation fidelity",
        ok,
        format!("{passed}/5 seeds at >= 0.80, hit rates [{}]", rates.join(", ")),
    );
    assert!(ok);
}

/// Confusion counts by enumeration; the spreader class is positive.
fn oracle(labels: &[Label], preds: &[Label]) -> MetricSet {
    let count = |y: Label, p: Label| labels.iter().zip(preds).filter(|&(&a, &b)| a == y && b == p).count() as f64;
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let f1 = |pos: Label, neg: Label| {
        let (tp, fp, fn_) = (count(pos, pos), count(neg, pos), count(pos, neg));
        let (p, r) = (div(tp, tp + fp), div(tp, tp + fn_));
        (div(2.0 * p * r, p + r), p, r)
    };
    let (f1_s, precision, recall) = f1(Label::Spreader, Label::Normal);
    let (f1_n, _, _) = f1(Label::Normal, Label::Spreader);
    let present = |c: Label| labels.contains(&c) || preds.contains(&c);
    let mut macro_terms = Vec::new();
    if present(Label::Normal) {
        macro_terms.push(f1_n);
    }
    if present(Label::Spreader) {
        macro_terms.push(f1_s);
    }
    let n = labels.len() as f64;
    let support_s = labels.iter().filter(|&&l| l == Label::Spreader).count() as f64;
    MetricSet {
        f1_macro: macro_terms.iter().sum::<f64>() / macro_terms.len() as f64,
        f1_weighted: (f1_s * support_s + f1_n * (n - support_s)) / n,
        accuracy: (count(Label::Spreader, Label::Spreader) + count(Label::Normal, Label::Normal)) / n,
        precision,
        recall,
    }
}

#[test]
fn criterion_06_metrics_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for case in 0..1000 {
        let n = rng.gen_range(1..=30);
        // every few cases is single-class to hit the zero-denominator paths
        let bias = match case % 5 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..1.0),
        };
        let draw = |rng: &mut ChaCha8Rng| if rng.gen_bool(bias) { Label::Spreader } else { Label::Normal };
        let labels: Vec<Label> = (0..n).map(|_| draw(&mut rng)).collect();
        let preds: Vec<Label> = (0..n).map(|_| draw(&mut rng)).collect();
        if compute_metrics(&labels, &preds).unwrap() != oracle(&labels, &preds) {
            mismatches += 1;
        }
    }
    let f = |v: f64| MetricSet::from_values([v; 5]);
    let folds = [0.7362 - 0.0411, 0.7362 + 0.0411]
        .iter()
        .enumerate()
        .map(|(fold, &v)| FoldMetrics {
            fold,
            validation_size: 40,
            metrics: f(v),
            per_language: Default::default(),
        })
        .collect();
    let table = CvReport::new(folds).to_table();
    let formatted = table.contains("73.62 ± 4.11");
    let ok = mismatches == 0 && formatted;
    report(
        6,
        "metrics oracle",
        ok,
        format!("{mismatches} mismatches in 1000 cases, summary row renders 73.62 ± 4.11: {formatted}"),
    );
    assert!(ok);
}

#[test]
fn criterion_07_determinism() {
    let (_, _, first, _) = default_run();
    let (_, _, second, _) = synthetic_run(1234);
    let bytes = |cv: &CvOutcome| cv.bundles.iter().map(|b| b.to_bytes().unwrap()).collect::<Vec<_>>();
    let same_bundles = bytes(first) == bytes(&second);
    let same_report = first.report.to_json().unwrap() == second.report.to_json().unwrap()
        && first.report.to_table() == second.report.to_table();
    let ok = same_bundles && same_report;
    report(
        7,
        "determinism",
        ok,
        format!("bundles identical: {same_bundles}, reports identical: {same_report}"),
    );
    assert!(ok);
}

fn is_format_error<T>(r: std::thread::Result<spreader_profiler::Result<T>>) -> bool {
    matches!(r, Ok(Err(Error::Format { .. })))
}

fn never_panics<T>(r: std::thread::Result<spreader_profiler::Result<T>>) -> bool {
    r.is_ok()
}

#[test]
fn criterion_08_format_round_trips() {
    use std::panic::catch_unwind;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = PrecomputedEmbeddingStore::new(5).unwrap();
    for a in 0..6 {
        let rows = rng.gen_range(1..5);
        store.insert(format!("a{a}"), rows, (0..rows * 5).map(|_| rng.gen::<f32>()).collect()).unwrap();
    }
    let semb = store.to_bytes();
    let semb_round = PrecomputedEmbeddingStore::from_bytes(&semb).unwrap() == store;

    let s = generate(&SyntheticConfig::default()).unwrap();
    let vocab = spreader_profiler::corpus::build_vocab(&s.corpus, 1).unwrap();
    let model = Model::new(desk_model_config(), Some(vocab), &mut rng).unwrap();
    let bundle = ModelBundle::from_model(&model, Some(2), 7, false);
    let bnd = bundle.to_bytes().unwrap();
    let bundle_round = ModelBundle::from_bytes(&bnd).unwrap() == bundle;
    let model_round = bundle.to_model().unwrap().store.iter().zip(model.store.iter()).all(|(a, b)| {
        a.name == b.name && a.value.data().iter().zip(b.value.data()).all(|(x, y)| *x == (*y as f32) as f64)
    });

    let mut format_errors = true;
    let mut no_panics = true;
    for bytes in [&semb, &bnd] {
        let is_semb = std::ptr::eq(bytes, &semb);
        let parse = |b: &[u8]| -> std::thread::Result<spreader_profiler::Result<()>> {
            let b = b.to_vec();
            catch_unwind(move || {
                if is_semb {
                    PrecomputedEmbeddingStore::from_bytes(&b).map(|_| ())
                } else {
                    ModelBundle::from_bytes(&b).map(|_| ())
                }
            })
        };
        let mut bad_magic = bytes.clone();
        bad_magic[0] ^= 0xff;
        format_errors &= is_format_error(parse(&bad_magic));
        for cut in 0..bytes.len() {
            format_errors &= is_format_error(parse(&bytes[..cut]));
        }
        let mut extended = bytes.clone();
        extended.push(0);
        format_errors &= is_format_error(parse(&extended));
        // blow up each 4-byte word in turn, which covers every length prefix
        for at in 4..bytes.len().saturating_sub(4) {
            let mut b = bytes.clone();
            b[at..at + 4].copy_from_slice(&u32::MAX.to_le_bytes());
            no_panics &= never_panics(parse(&b));
        }
        for _ in 0..300 {
            let mut b = bytes.clone();
            let i = rng.gen_range(0..b.len());
            b[i] = rng.gen();
            no_panics &= never_panics(parse(&b));
        }
    }
    let ok = semb_round && bundle_round && model_round && format_errors && no_panics;
    report(
        8,
        "format round trips",
        ok,
        format!(
            "semb {semb_round}, bundle {bundle_round}, reload {model_round}, corrupt input gives format errors {format_errors}, no panics {no_panics}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_09_preprocessing_conformance() {
    let raw = std::fs::read_to_string(fixtures().join("tags.tsv")).unwrap();
    let mut wrong = Vec::new();
    let mut covered = BTreeSet::new();
    for line in raw.lines().filter(|l| !l.is_empty()) {
        let (input, expected) = line.split_once('\t').unwrap();
        if normalize_tags(input) != expected {
            wrong.push(input.to_owned());
        }
        for tag in ["[URL]", "[HASHTAG]", "[USER]", "[RT]"] {
            if expected.contains(tag) {
                covered.insert(tag);
            }
        }
    }
    let pan = load_pan_directory(&fixtures().join("pan_en"), "en").unwrap();
    let synthetic = generate(&SyntheticConfig::default()).unwrap().corpus;
    let mut texts: Vec<String> = raw.lines().flat_map(|l| l.split('\t')).map(str::to_owned).collect();
    for c in [&pan, &synthetic] {
        for p in c.profiles() {
            texts.extend(p.posts.iter().map(|post| post.raw_text.clone()));
        }
    }
    let not_idempotent = texts
        .iter()
        .filter(|t| {
            let once = normalize_tags(t);
            normalize_tags(&once) != once
        })
        .count();
    let ok = wrong.is_empty() && covered.len() == 4 && not_idempotent == 0;
    report(
        9,
        "preprocessing conformance",
        ok,
        format!(
            "{} fixture lines wrong {wrong:?}, {} of 4 tags covered, {not_idempotent} of {} texts not idempotent",
            wrong.len(),
            covered.len(),
            texts.len()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_10_fold_hygiene() {
    let cfg = SyntheticConfig {
        authors: 200,
        languages: vec!["en".into()],
        posts_per_author: 2,
        ..SyntheticConfig::default()
    };
    let corpus = generate(&cfg).unwrap().corpus;
    let spreaders = corpus.profiles().iter().filter(|p| p.label == Some(Label::Spreader)).count();
    let splits = stratified_kfold(&corpus, 5, 1234).unwrap();
    let all: BTreeSet<&str> = corpus.profiles().iter().map(|p| p.author_id.as_str()).collect();
    let mut seen = BTreeSet::new();
    let mut ok = spreaders == 100 && splits.len() == 5;
    for split in &splits {
        let balance = split
            .validation
            .iter()
            .filter(|id| corpus.get(id).unwrap().label == Some(Label::Spreader))
            .count();
        ok &= split.validation.len() == 40 && balance == 20;
        for id in &split.validation {
            ok &= seen.insert(id.as_str());
        }
        let train: BTreeSet<&str> = split.train.iter().map(String::as_str).collect();
        let val: BTreeSet<&str> = split.validation.iter().map(String::as_str).collect();
        ok &= train.is_disjoint(&val) && train.len() + val.len() == all.len();
    }
    ok &= seen == all;
    report(
        10,
        "fold hygiene",
        ok,
        format!("200 authors ({spreaders} spreaders) into {} folds of 40 with 20/20 balance", splits.len()),
    );
    assert!(ok);
}
