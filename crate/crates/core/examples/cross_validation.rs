//! Five-fold cross-validation on a generated corpus where spreaders, and
//! only spreaders, use a marker word, followed by an ensemble vote.

use spreader_profiler::synthetic::{desk_hyperparams, desk_model_config, generate, SyntheticConfig};
use spreader_profiler::training::{cross_validate, predict_ensemble, TrainingData};

fn main() -> spreader_profiler::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let synthetic = generate(&SyntheticConfig::default())?;
    let corpus = &synthetic.corpus;
    let hp = desk_hyperparams();
    let data = TrainingData { corpus, embeddings: None };

    let outcome = cross_validate(data, &desk_model_config(), &hp)?;
    print!("{}", outcome.report.to_table());

    let models = outcome.bundles.iter().map(|b| b.to_model()).collect::<Result<Vec<_>, _>>()?;
    let mut right = 0;
    let mut ties = 0;
    for p in corpus.profiles() {
        let (vote, _) = predict_ensemble(&models, p, None)?;
        right += usize::from(Some(vote.label) == p.label);
        ties += usize::from(vote.tie);
    }
    println!(
        "\nensemble of {} fold models: {right}/{} authors correct, {ties} ties",
        models.len(),
        corpus.len()
    );
    Ok(())
}
