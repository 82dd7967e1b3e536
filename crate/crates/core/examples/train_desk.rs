//! A short training run on synthetic textures, small enough for a laptop.
//!
//! cargo run --release --example train_desk [STEPS] [OUT.idfw]

use std::path::PathBuf;

use idf::io::save_weights;
use idf::synth::synthetic_textures;
use idf::train::{train_on_images, TrainConfig};
use idf::{denoise, psnr, EngineConfig, ModelConfig, ModelWeights, Noise, Rng};

fn main() -> idf::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(60);
    let out: PathBuf = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("idf-desk.idfw"));

    let model = ModelConfig {
        hidden_width: 16,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        steps,
        learning_rate: 2e-3,
        batch_size: 2,
        patch_size: 24,
        unroll: 4,
        noise: Noise::Gaussian { sigma255: 25.0 },
        seed: 1,
        ..TrainConfig::default()
    };
    let images = synthetic_textures(8, 64, 0);
    let init = ModelWeights::init(model, cfg.seed)?;
    let every = (steps / 10).max(1);
    let outcome = train_on_images(&images, init, &cfg, |e, _| {
        if e.step % every == 0 {
            println!("step {:>4}  loss {:.5}", e.step, e.loss);
        }
        Ok(())
    })?;
    save_weights(&outcome.weights, &out)?;

    let clean = synthetic_textures(1, 64, 99).remove(0);
    let noisy = cfg.noise.apply(&clean, &mut Rng::new(5))?;
    let result = denoise(&noisy, &outcome.weights, &EngineConfig::fixed(4))?;
    println!(
        "held-out: noisy {:.2} dB -> denoised {:.2} dB",
        psnr(&noisy, &clean)?,
        psnr(&result.estimate, &clean)?
    );
    println!("weights in {}", out.display());
    Ok(())
}
