//! The joined baseline: every author's posts are concatenated into one
//! sequence, optionally wrapped in post start/end markers, and encoded once.
//! Compares accuracy with and without the markers.

use spreader_profiler::model::BaselineMode;
use spreader_profiler::synthetic::{desk_hyperparams, desk_model_config, generate, SyntheticConfig};
use spreader_profiler::training::{cross_validate, TrainingData};

fn main() -> spreader_profiler::Result<()> {
    let synthetic = generate(&SyntheticConfig::default())?;
    let data = TrainingData {
        corpus: &synthetic.corpus,
        embeddings: None,
    };
    for markers in [false, true] {
        let mut config = desk_model_config();
        config.baseline = BaselineMode::Joined;
        config.join_markers = markers;
        config.encoder.max_post_len = 96;
        let outcome = cross_validate(data, &config, &desk_hyperparams())?;
        let acc = outcome.report.summary.accuracy;
        println!("joined, markers {markers:<5}: accuracy {}", acc.percent());
    }
    Ok(())
}
