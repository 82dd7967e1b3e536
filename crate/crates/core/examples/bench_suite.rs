//! Sweeps the default noise suite over a handful of synthetic images.
//!
//! cargo run --release --example bench_suite [WEIGHTS.idfw]

use idf::bench::run_bench;
use idf::io::{bench_markdown, load_weights_inferred, DEFAULT_SUITE};
use idf::synth::synthetic_textures;
use idf::{EngineConfig, ModelConfig, ModelWeights};

fn main() -> idf::Result<()> {
    let weights = match std::env::args().nth(1) {
        Some(p) => load_weights_inferred(p.as_ref(), &ModelConfig::default())?,
        None => ModelWeights::init(
            ModelConfig {
                hidden_width: 16,
                ..ModelConfig::default()
            },
            0,
        )?,
    };
    let images: Vec<_> = synthetic_textures(3, 48, 10)
        .into_iter()
        .enumerate()
        .map(|(i, img)| (format!("tex{i}.png"), img))
        .collect();
    let rows = run_bench(
        &images,
        "synthetic",
        &weights,
        &EngineConfig::default(),
        &DEFAULT_SUITE,
        0,
    )?;
    print!("{}", bench_markdown(&rows));
    for row in &rows {
        println!(
            "{:<22} iterations mean {:.1}, {} of {} converged",
            row.noise, row.iterations.mean, row.iterations.converged, row.iterations.count
        );
    }
    Ok(())
}
