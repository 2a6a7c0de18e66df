//! Trains on externally computed post embeddings. Here the store is filled
//! with random vectors plus a shifted direction for spreaders, written to a
//! SEMB1 file and read back, as an external encoder's output would be.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spreader_profiler::corpus::Label;
use spreader_profiler::encoder::PrecomputedEmbeddingStore;
use spreader_profiler::model::{EncoderMode, ModelConfig};
use spreader_profiler::synthetic::{desk_hyperparams, generate, SyntheticConfig};
use spreader_profiler::training::{cross_validate, TrainingData};

const DIM: usize = 12;

fn main() -> spreader_profiler::Result<()> {
    let synthetic = generate(&SyntheticConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = PrecomputedEmbeddingStore::new(DIM)?;
    for p in synthetic.corpus.profiles() {
        let shift = if p.label == Some(Label::Spreader) { 0.8 } else { 0.0 };
        let rows = p.posts.len();
        let values = (0..rows * DIM)
            .map(|i| rng.gen_range(-1.0..1.0f32) + if i % DIM == 0 { shift } else { 0.0 })
            .collect();
        store.insert(p.author_id.clone(), rows, values)?;
    }
    let path = std::env::temp_dir().join("spreader_example.semb");
    store.save(&path)?;
    let store = PrecomputedEmbeddingStore::load(&path)?;
    println!("{} authors, width {}, read from {}", store.len(), store.dim(), path.display());

    let config = ModelConfig {
        encoder_mode: EncoderMode::Precomputed,
        embedding_dim: DIM,
        ..ModelConfig::default()
    };
    let data = TrainingData {
        corpus: &synthetic.corpus,
        embeddings: Some(&store),
    };
    let outcome = cross_validate(data, &config, &desk_hyperparams())?;
    print!("{}", outcome.report.to_table());
    Ok(())
}
