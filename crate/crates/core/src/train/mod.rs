//! Supervised training of the shared block weights.
//!
//! Each step draws random patches, flips them, corrupts them on the fly,
//! unrolls a fixed number of iterations, and applies one AdamW update from the
//! L1 loss on the final estimate.

mod adamw;
mod gradcheck;
mod tape;

use std::path::Path;
use std::time::Instant;

pub use adamw::{adamw_step, AdamState, AdamWConfig};
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport, TensorCheck};
pub use tape::{
    backward, backward_scaled, forward_with_tape, l1_loss, ClampAdjoint, Gradients, Tape,
    TapeConfig,
};

use crate::error::{IdfError, Result};
use crate::model::ModelWeights;
use crate::noise::{Noise, Rng};
use crate::tensor::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub unroll: usize,
    pub noise: Noise,
    pub adamw: AdamWConfig,
    pub seed: u64,
    pub clamp_adjoint: ClampAdjoint,
    /// Write a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            learning_rate: 1e-4,
            batch_size: 8,
            patch_size: 48,
            unroll: 10,
            noise: Noise::Gaussian { sigma255: 15.0 },
            adamw: AdamWConfig::default(),
            seed: 0,
            clamp_adjoint: ClampAdjoint::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, kernel_size: usize) -> Result<()> {
        if self.batch_size == 0 || self.unroll == 0 {
            return Err(IdfError::InvalidArgument(
                "batch_size and unroll must be ≥ 1".into(),
            ));
        }
        if self.patch_size < 2 * kernel_size + 1 {
            return Err(IdfError::InvalidArgument(format!(
                "patch_size {} is below the minimum {}",
                self.patch_size,
                2 * kernel_size + 1
            )));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(IdfError::InvalidArgument(
                "learning_rate must be positive".into(),
            ));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogEntry {
    pub step: usize,
    pub loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub log: Vec<TrainLogEntry>,
}

impl TrainOutcome {
    /// Mean loss over log entries `[from, to)`.
    pub fn mean_loss(&self, from: usize, to: usize) -> f64 {
        let slice = &self.log[from.min(self.log.len())..to.min(self.log.len())];
        slice.iter().map(|e| e.loss).sum::<f64>() / slice.len().max(1) as f64
    }
}

fn crop_flip(img: &Image, y0: usize, x0: usize, size: usize, flip_h: bool, flip_v: bool) -> Image {
    Image::from_fn(img.channels(), size, size, |c, y, x| {
        let sy = if flip_v { size - 1 - y } else { y };
        let sx = if flip_h { size - 1 - x } else { x };
        img.get(c, y0 + sy, x0 + sx)
    })
}

/// Draws one batch of `(noisy, clean)` patches.
pub fn sample_batch(
    images: &[Image],
    cfg: &TrainConfig,
    rng: &mut Rng,
    noise_rng: &mut Rng,
) -> Result<Vec<(Image, Image)>> {
    (0..cfg.batch_size)
        .map(|_| {
            let img = &images[rng.below(images.len())];
            let p = cfg.patch_size;
            let y0 = rng.below(img.height() - p + 1);
            let x0 = rng.below(img.width() - p + 1);
            let flip_h = rng.coin();
            let flip_v = rng.coin();
            let clean = crop_flip(img, y0, x0, p, flip_h, flip_v);
            let noisy = cfg.noise.apply(&clean, noise_rng)?;
            Ok((noisy, clean))
        })
        .collect()
}

/// Adapts images to the model's channel count (grayscale is replicated).
fn conform(images: &[Image], channels: usize, patch: usize) -> Result<Vec<Image>> {
    images
        .iter()
        .map(|img| {
            if img.height() < patch || img.width() < patch {
                return Err(IdfError::InvalidArgument(format!(
                    "training image {}×{} is smaller than the {patch}px patch",
                    img.height(),
                    img.width()
                )));
            }
            match img.channels() {
                c if c == channels => Ok(img.clone()),
                1 => img.replicate_channels(channels),
                c => Err(IdfError::Shape(format!(
                    "training image has {c} channels, model expects {channels}"
                ))),
            }
        })
        .collect()
}

/// Trains from `init` on in-memory clean images. `observer` sees every step.
pub fn train_on_images(
    images: &[Image],
    init: ModelWeights,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&TrainLogEntry, &ModelWeights) -> Result<()>,
) -> Result<TrainOutcome> {
    let mc = *init.config();
    cfg.validate(mc.kernel_size)?;
    if images.is_empty() {
        return Err(IdfError::InvalidArgument("no training images".into()));
    }
    let images = conform(images, mc.channels, cfg.patch_size)?;
    let mut weights = init;
    let mut state = AdamState::new(&weights);
    let mut rng = Rng::stream(cfg.seed, 0);
    let mut noise_rng = Rng::stream(cfg.seed, 1);
    let tape_cfg = TapeConfig {
        unroll: cfg.unroll,
        clamp_adjoint: cfg.clamp_adjoint,
    };
    let start = Instant::now();
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let batch = sample_batch(&images, cfg, &mut rng, &mut noise_rng)?;
        let (loss, mut tape) = forward_with_tape(&batch, &weights, &tape_cfg)?;
        let grads = backward(&mut tape)?;
        adamw_step(
            &mut weights,
            &grads,
            &mut state,
            cfg.learning_rate,
            &cfg.adamw,
        )?;
        let entry = TrainLogEntry {
            step,
            loss,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        observer(&entry, &weights)?;
        log.push(entry);
    }
    Ok(TrainOutcome { weights, log })
}

/// Trains on every PNG in `dataset_dir` (non-recursive).
pub fn train(
    dataset_dir: &Path,
    init: ModelWeights,
    cfg: &TrainConfig,
    observer: impl FnMut(&TrainLogEntry, &ModelWeights) -> Result<()>,
) -> Result<TrainOutcome> {
    let images: Vec<Image> = crate::io::list_pngs(dataset_dir)?
        .iter()
        .map(|p| crate::io::load_image(p))
        .collect::<Result<_>>()?;
    if images.is_empty() {
        return Err(IdfError::EmptyDataset(dataset_dir.to_path_buf()));
    }
    train_on_images(&images, init, cfg, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny() -> ModelWeights {
        let cfg = ModelConfig {
            hidden_width: 4,
            ..ModelConfig::default()
        };
        let mut w = ModelWeights::init(cfg, 3).unwrap();
        w.randomize_biases(0.1, 4);
        w
    }

    fn pair(seed: u64) -> (Image, Image) {
        let clean = Image::from_fn(3, 8, 8, |c, y, x| {
            0.5 + 0.3 * ((x as f64 * 0.9 + c as f64 + seed as f64).sin() * (y as f64 * 0.5).cos())
        });
        let noisy = Noise::Gaussian { sigma255: 20.0 }
            .apply(&clean, &mut Rng::new(seed))
            .unwrap();
        (noisy, clean)
    }

    #[test]
    fn l1_cases() {
        let a = Image::filled(1, 3, 3, 0.2);
        assert_eq!(l1_loss(&a, &a).unwrap(), 0.0);
        let b = Image::filled(1, 3, 3, 0.3);
        assert!((l1_loss(&b, &a).unwrap() - 0.1).abs() < 1e-15);
        assert!(l1_loss(&a, &Image::filled(1, 3, 4, 0.2)).is_err());
    }

    #[test]
    fn tape_cannot_be_reused() {
        let w = tiny();
        let (_, mut tape) = forward_with_tape(&[pair(1)], &w, &TapeConfig::new(2)).unwrap();
        backward(&mut tape).unwrap();
        assert!(matches!(
            backward(&mut tape),
            Err(IdfError::TapeInvalidated)
        ));
    }

    #[test]
    fn replay_is_bit_exact() {
        let w = tiny();
        let (loss, tape) = forward_with_tape(&[pair(1), pair(2)], &w, &TapeConfig::new(3)).unwrap();
        assert_eq!(tape.replay().unwrap().to_bits(), loss.to_bits());
    }

    #[test]
    fn zero_steps_returns_initial_weights() {
        let w = tiny();
        let cfg = TrainConfig {
            steps: 0,
            patch_size: 8,
            ..TrainConfig::default()
        };
        let out = train_on_images(&[pair(0).1], w.clone(), &cfg, |_, _| Ok(())).unwrap();
        assert_eq!(out.weights, w);
        assert!(out.log.is_empty());
    }

    #[test]
    fn adamw_zero_gradient_is_identity_without_decay() {
        let mut w = tiny();
        let before = w.clone();
        let g = Gradients::zeros_like(&w);
        let mut st = AdamState::new(&w);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        for _ in 0..3 {
            adamw_step(&mut w, &g, &mut st, 1e-3, &cfg).unwrap();
        }
        assert_eq!(w, before);
        assert_eq!(st.step(), 3);
    }

    #[test]
    fn adamw_decay_only_shrinks_geometrically() {
        let mut w = tiny();
        let before = w.clone();
        let g = Gradients::zeros_like(&w);
        let mut st = AdamState::new(&w);
        let cfg = AdamWConfig::default();
        adamw_step(&mut w, &g, &mut st, 0.1, &cfg).unwrap();
        adamw_step(&mut w, &g, &mut st, 0.1, &cfg).unwrap();
        let f = (1.0 - 0.1 * 0.01f64).powi(2);
        for (a, b) in w.tensors().iter().zip(before.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y * f).abs() <= 1e-15 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn adamw_rejects_mismatched_gradients() {
        let mut w = tiny();
        let other = ModelWeights::init(ModelConfig::default(), 0).unwrap();
        let g = Gradients::zeros_like(&other);
        let mut st = AdamState::new(&w);
        assert!(adamw_step(&mut w, &g, &mut st, 1e-3, &AdamWConfig::default()).is_err());
    }
}
