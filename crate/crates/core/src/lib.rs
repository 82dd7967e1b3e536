//! Iterative dynamic filtering: a small shared block predicts a per-pixel
//! filter kernel, the kernel is applied to the current estimate, and the
//! process repeats with alternating dilation until the kernels stop changing.
//!
//! ```no_run
//! use idf::{denoise, EngineConfig, ModelConfig, ModelWeights, Noise, Rng};
//! use idf::synth::synthetic_textures;
//!
//! let clean = &synthetic_textures(1, 64, 0)[0];
//! let noisy = Noise::Gaussian { sigma255: 25.0 }.apply(clean, &mut Rng::new(1)).unwrap();
//! let weights = ModelWeights::init(ModelConfig::default(), 0).unwrap();
//! let result = denoise(&noisy, &weights, &EngineConfig::default()).unwrap();
//! println!("{} iterations, {}", result.iterations_used, result.stop_reason);
//! ```

pub mod bench;
pub mod cli;
mod direct;
pub mod engine;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod ops;
pub mod synth;
pub mod tensor;
pub mod train;

pub use engine::{
    confidence_score, denoise, iteration_stats, DenoiseResult, EngineConfig, StopMode, StopReason,
};
pub use error::{IdfError, Result};
pub use metrics::{psnr, ssim, MetricReport};
pub use model::{did_forward, ModelConfig, ModelWeights};
pub use noise::{Noise, NoiseSpec, Rng};
pub use ops::{apply_kernels, conv2d, power_normalize, unfold, KernelField, PatchField};
pub use tensor::{Image, Tensor};
