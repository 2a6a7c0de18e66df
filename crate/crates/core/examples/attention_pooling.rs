//! Attention pooling over a handful of post embeddings, next to plain mean
//! pooling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spreader_profiler::attention::{AttentionHead, PoolingMode};
use spreader_profiler::autograd::ParamStore;
use spreader_profiler::Tensor;

fn show(name: &str, t: &Tensor) {
    let cells: Vec<String> = t.data().iter().map(|v| format!("{v:7.4}")).collect();
    println!("{name:>14}: [{}]", cells.join(", "));
}

fn main() -> spreader_profiler::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let head = AttentionHead::new(3, &mut store, &mut rng);

    // four posts; the last one points somewhere else
    let hp = Tensor::from_rows(&[
        vec![0.2, 0.1, 0.0],
        vec![0.1, 0.2, 0.0],
        vec![0.2, 0.2, 0.1],
        vec![1.5, -1.0, 2.0],
    ])?;

    let att = head.attend_profile(&store, &hp, PoolingMode::Attention)?;
    let mean = head.attend_profile(&store, &hp, PoolingMode::Mean)?;
    let a = att.attention.as_ref().expect("attention mode keeps A");
    for (i, row) in a.rows().enumerate() {
        show(&format!("A row {i}"), &Tensor::vector(row.to_vec()));
    }
    show("post weights", att.post_weights.as_ref().unwrap());
    show("attention v", &att.author_vector);
    show("mean v", &mean.author_vector);

    // identity projection and identical posts: both modes agree
    store.get_mut(head.wap).value = Tensor::identity(3);
    let same = Tensor::from_rows(&vec![vec![0.4, -0.3, 0.9]; 4])?;
    let a = head.attend_profile(&store, &same, PoolingMode::Attention)?;
    let m = head.attend_profile(&store, &same, PoolingMode::Mean)?;
    println!("\nidentical posts: max |attention v - mean v| = {:.1e}", a.author_vector.max_abs_diff(&m.author_vector));
    Ok(())
}
