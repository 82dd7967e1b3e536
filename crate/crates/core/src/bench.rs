//! Noise-suite sweep: corrupt every clean image with each noise, denoise, score.

use crate::engine::{denoise, iteration_stats, EngineConfig, IterationSummary};
use crate::error::Result;
use crate::metrics::{psnr, ssim};
use crate::model::ModelWeights;
use crate::noise::{Noise, Rng};
use crate::tensor::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanScore {
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub noise: String,
    pub dataset: String,
    pub images: usize,
    pub noisy: MeanScore,
    pub denoised: MeanScore,
    pub iterations: IterationSummary,
}

/// One row per noise in `suite`. Image `i` under noise `n` is corrupted with
/// stream `n·2¹⁶ + i` of `seed`, so rows are independent of suite order.
pub fn run_bench(
    images: &[(String, Image)],
    dataset: &str,
    weights: &ModelWeights,
    engine: &EngineConfig,
    suite: &[Noise],
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let channels = weights.config().channels;
    let clean = images
        .iter()
        .map(|(_, img)| {
            if img.channels() == channels {
                Ok(img.clone())
            } else {
                img.replicate_channels(channels)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(suite.len());
    for noise in suite {
        let stream_base = noise_stream_id(noise) << 16;
        let mut noisy_sum = (0.0, 0.0);
        let mut out_sum = (0.0, 0.0);
        let mut results = Vec::with_capacity(clean.len());
        for (i, img) in clean.iter().enumerate() {
            let noisy = noise.apply(img, &mut Rng::stream(seed, stream_base + i as u64))?;
            let res = denoise(&noisy, weights, engine)?;
            noisy_sum.0 += psnr(&noisy, img)?;
            noisy_sum.1 += ssim(&noisy, img)?;
            out_sum.0 += psnr(&res.estimate, img)?;
            out_sum.1 += ssim(&res.estimate, img)?;
            results.push(res);
        }
        let n = clean.len().max(1) as f64;
        rows.push(BenchRow {
            noise: noise.label(),
            dataset: dataset.to_string(),
            images: clean.len(),
            noisy: MeanScore {
                psnr_db: noisy_sum.0 / n,
                ssim: noisy_sum.1 / n,
            },
            denoised: MeanScore {
                psnr_db: out_sum.0 / n,
                ssim: out_sum.1 / n,
            },
            iterations: iteration_stats(&results)?,
        });
    }
    Ok(rows)
}

/// Stable id derived from the noise spec text.
fn noise_stream_id(noise: &Noise) -> u64 {
    noise
        .to_string()
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
        })
        & 0xffff_ffff
}
