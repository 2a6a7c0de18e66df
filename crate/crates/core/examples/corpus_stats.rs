//! Loads a PAN-style directory and prints per-language statistics.
//!
//! ```bash
//! cargo run --example corpus_stats -- path/to/en en
//! ```
//! Without arguments it reads the bundled test fixture.

use std::path::PathBuf;

use spreader_profiler::corpus::{corpus_stats, load_pan_directory, load_truth};

fn main() -> spreader_profiler::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pan_en"));
    let lang = args.next().unwrap_or_else(|| "en".into());

    let corpus = load_pan_directory(&dir, &lang)?;
    let corpus = corpus.with_truth(&load_truth(&dir.join("truth.txt"))?)?;

    let first = &corpus.profiles()[0];
    println!("{} authors; first post of {}:", corpus.len(), first.author_id);
    println!("  raw:        {}", first.posts[0].raw_text);
    println!("  normalized: {}", first.posts[0].normalized_text);
    println!("  tokens:     {:?}\n", first.posts[0].tokens);

    let stats = corpus_stats(&corpus)?;
    print!("{}", stats.to_table());
    Ok(())
}
