use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spreader_profiler::corpus::write_pan_directory;
use spreader_profiler::synthetic::{generate, SyntheticConfig};

fn profiler(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_profiler"))
        .args(args)
        .env("PROFILER_LOG", "error")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small generated corpus in PAN layout plus a config that trains
/// a tiny model quickly.
fn workspace(tmp: &Path) -> (PathBuf, PathBuf) {
    let synthetic = generate(&SyntheticConfig {
        authors: 12,
        posts_per_author: 4,
        languages: vec!["en".into()],
        ..SyntheticConfig::default()
    })
    .unwrap();
    let corpus_dir = tmp.join("en");
    write_pan_directory(&synthetic.corpus, &corpus_dir).unwrap();
    let config = tmp.join("config.json");
    let json = serde_json::json!({
        "corpus_en": corpus_dir,
        "lang": "en",
        "d_model": 8,
        "n_layers": 1,
        "n_heads": 2,
        "d_ff": 16,
        "max_post_len": 12,
        "learning_rate": 0.01,
        "epochs": 2,
        "folds": 3,
    });
    std::fs::write(&config, json.to_string()).unwrap();
    (corpus_dir, config)
}

#[test]
fn stats_on_empty_directory_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = profiler(&["stats", "--lang", "en", "--corpus-en", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.json");
    std::fs::write(&config, r#"{"epoch": 3}"#).unwrap();
    let out = profiler(&["train", "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_json_counts_fixture() {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pan_en");
    let out = profiler(&["stats", "--json", "--lang", "en", "--corpus-en", s(&fixture)]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["languages"][0]["total_profiles"], 4);
    assert_eq!(v["languages"][0]["spreaders"], 2);
}

#[test]
fn gradcheck_passes() {
    let out = profiler(&["gradcheck", "--seeds", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn huge_learning_rate_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, config) = workspace(tmp.path());
    let out = profiler(&[
        "train",
        "--config",
        s(&config),
        "--learning-rate",
        "1e300",
        "--out-dir",
        s(&tmp.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cv_predict_explain_export() {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus_dir, config) = workspace(tmp.path());
    let out_dir = tmp.path().join("out");
    let common = ["--config", s(&config), "--out-dir", s(&out_dir), "--threads", "1"];

    let out = profiler(&[&["cv"], &common[..]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["fold0.bundle", "fold1.bundle", "fold2.bundle", "cv_report.json", "cv_report.txt", "cv_config.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }

    let out = profiler(&[&["predict"], &common[..]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = std::fs::read_to_string(out_dir.join("predictions.txt")).unwrap();
    let lines: Vec<&str> = lines.lines().collect();
    assert_eq!(lines.len(), 12);
    for line in &lines {
        let (id, label) = line.split_once(":::").unwrap();
        assert!(corpus_dir.join(format!("{id}.xml")).is_file());
        assert!(label == "0" || label == "1", "{line}");
    }
    let votes: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("votes.json")).unwrap()).unwrap();
    assert_eq!(votes.as_array().unwrap().len(), 12);
    assert_eq!(votes[0]["tie"], false);

    let out = profiler(&[&["explain", "--author", "en001"], &common[..]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("explain/en001.json").is_file());
    assert!(out_dir.join("explain/en001.html").is_file());

    let semb = tmp.path().join("posts.semb");
    let out = profiler(&[&["export-embeddings", "--output", s(&semb)], &common[..]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let store = spreader_profiler::encoder::PrecomputedEmbeddingStore::load(&semb).unwrap();
    assert_eq!((store.len(), store.dim()), (12, 8));

    // a width mismatch is a configuration error; the matching width trains
    let train = |config: &Path| {
        profiler(&[
            "train",
            "--config",
            s(config),
            "--encoder",
            "precomputed",
            "--embeddings",
            s(&semb),
            "--out-dir",
            s(&out_dir),
        ])
    };
    assert_eq!(train(&config).status.code(), Some(2));
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    json["embedding_dim"] = 8.into();
    let wide = tmp.path().join("precomputed.json");
    std::fs::write(&wide, json.to_string()).unwrap();
    let out = train(&wide);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("model.bundle").is_file());
}
