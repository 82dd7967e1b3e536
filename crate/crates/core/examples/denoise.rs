//! Runs the iterative filter with early stopping and prints the per-iteration
//! confidence trace.
//!
//! cargo run --release --example denoise [WEIGHTS.idfw]
//!
//! Without a checkpoint the block is randomly initialised, so expect a mild
//! smoothing rather than real denoising.

use idf::engine::TraceLevel;
use idf::io::load_weights_inferred;
use idf::synth::synthetic_textures;
use idf::{denoise, psnr, EngineConfig, ModelConfig, ModelWeights, Noise, Rng, StopMode};

fn main() -> idf::Result<()> {
    let weights = match std::env::args().nth(1) {
        Some(p) => load_weights_inferred(p.as_ref(), &ModelConfig::default())?,
        None => ModelWeights::init(ModelConfig::default(), 0)?,
    };
    let clean = synthetic_textures(1, 64, 3).remove(0);
    let noisy = Noise::Gaussian { sigma255: 25.0 }.apply(&clean, &mut Rng::new(11))?;

    let cfg = EngineConfig {
        max_iterations: 10,
        stop_mode: StopMode::KernelDic,
        kappa: 0.015,
        trace_level: TraceLevel::Full,
        ..EngineConfig::default()
    };
    let result = denoise(&noisy, &weights, &cfg)?;

    println!("noisy       {:6.2} dB", psnr(&noisy, &clean)?);
    for (rec, est) in result.iterations.iter().zip(&result.estimates) {
        let conf = rec
            .confidence
            .map_or("-".to_string(), |c| format!("{c:.5}"));
        println!(
            "t={:<2} d={}  {:6.2} dB  confidence {}",
            rec.t,
            rec.dilation,
            psnr(est, &clean)?,
            conf
        );
    }
    println!(
        "stopped after {} iterations ({}), {} degenerate kernels",
        result.iterations_used, result.stop_reason, result.degenerate_kernel_count
    );
    Ok(())
}
