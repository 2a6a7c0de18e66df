//! Trains on a generated corpus, then ranks one held-out spreader's posts
//! by attention and writes the JSON and HTML reports.

use spreader_profiler::explain::{emit_html, emit_json, explain_author};
use spreader_profiler::synthetic::{desk_hyperparams, desk_model_config, generate, SyntheticConfig, MARKER};
use spreader_profiler::training::{stratified_kfold, train_fold, TrainingData};

fn main() -> spreader_profiler::Result<()> {
    let synthetic = generate(&SyntheticConfig::default())?;
    let corpus = &synthetic.corpus;
    let hp = desk_hyperparams();
    let split = &stratified_kfold(corpus, hp.folds, hp.seed)?[0];
    let fold = train_fold(TrainingData { corpus, embeddings: None }, split, &desk_model_config(), &hp)?;
    let model = fold.bundle.to_model()?;

    let author = split
        .validation
        .iter()
        .find(|id| synthetic.marker_posts.contains_key(*id))
        .expect("every fold holds spreaders");
    let profile = corpus.get(author).unwrap();
    let report = explain_author(&[model], &[fold.bundle.id()], profile, None, Some(4))?;

    println!("{author}: label {} (p = {:.3})", report.label, report.probs[1]);
    for post in &report.posts {
        let flag = if post.text.contains(MARKER) { "  <- marker" } else { "" };
        println!("  #{} w={:.3}  {}{flag}", post.index, post.weight.unwrap_or(f64::NAN), post.text);
    }

    let out = std::env::temp_dir().join("spreader_explain");
    std::fs::create_dir_all(&out).map_err(|e| spreader_profiler::Error::Input(e.to_string()))?;
    emit_json(&report, &out.join(format!("{author}.json")))?;
    emit_html(&report, &out.join(format!("{author}.html")))?;
    println!("reports in {}", out.display());
    Ok(())
}
