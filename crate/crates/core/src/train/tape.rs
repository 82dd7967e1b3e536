//! Unrolled forward pass with saved activations, and its exact adjoint.
//!
//! The correlation planes are treated as constants during the backward pass;
//! every other path, including the estimate-to-estimate chain through the
//! kernels, the RMS normalisations and the residual statistics, is
//! differentiated.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::engine::dilation_for;
use crate::error::{IdfError, Result};
use crate::model::{did_forward_cached, DidCache, ModelWeights, TENSOR_NAMES};
use crate::ops::{apply_kernels_backward, col2im, power_normalize_backward};
use crate::tensor::{rms_normalize_backward, Image, Tensor, RMS_EPSILON};

/// How gradients cross the `clamp01` applied to every estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClampAdjoint {
    /// Pass the gradient through unchanged.
    #[default]
    StraightThrough,
    /// Exact derivative: 1 inside [0, 1], 0 where the clamp is active.
    Hard,
}

impl std::fmt::Display for ClampAdjoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClampAdjoint::StraightThrough => "straight-through",
            ClampAdjoint::Hard => "hard",
        })
    }
}

impl std::str::FromStr for ClampAdjoint {
    type Err = IdfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").as_str() {
            "straight-through" => Ok(ClampAdjoint::StraightThrough),
            "hard" => Ok(ClampAdjoint::Hard),
            other => Err(IdfError::Config(format!("unknown clamp adjoint `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapeConfig {
    pub unroll: usize,
    pub clamp_adjoint: ClampAdjoint,
}

impl TapeConfig {
    pub fn new(unroll: usize) -> Self {
        TapeConfig {
            unroll,
            clamp_adjoint: ClampAdjoint::default(),
        }
    }
}

/// One gradient tensor per weight tensor, in [`TENSOR_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(w: &ModelWeights) -> Self {
        Gradients {
            tensors: w
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.dims().to_vec()))
                .collect(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        TENSOR_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        TENSOR_NAMES.iter().copied().zip(self.tensors.iter())
    }

    /// Flattened view in canonical order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    fn add(&mut self, idx: usize, values: &[f64]) {
        for (g, v) in self.tensors[idx].data_mut().iter_mut().zip(values) {
            *g += v;
        }
    }
}

const FEM1: usize = 0;
const FEM2: usize = 2;
const GSM1: usize = 4;
const GSM2: usize = 6;
const KPM: usize = 8;

struct SampleTape {
    clean: Image,
    /// `estimates[0]` is the noisy input, `estimates[t]` the output of iteration t.
    estimates: Vec<Image>,
    caches: Vec<DidCache>,
}

/// Saved forward state of one batch.
pub struct Tape {
    weights: ModelWeights,
    cfg: TapeConfig,
    batch: Vec<(Image, Image)>,
    samples: Vec<SampleTape>,
    loss: f64,
    spent: bool,
}

/// Mean absolute difference over all elements.
pub fn l1_loss(pred: &Image, target: &Image) -> Result<f64> {
    if !pred.same_dims(target) {
        return Err(IdfError::Shape(format!(
            "loss inputs differ: {:?} vs {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let n = pred.data().len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

fn forward_sample(
    noisy: &Image,
    clean: &Image,
    w: &ModelWeights,
    unroll: usize,
    frozen: Option<&[Vec<f64>]>,
) -> Result<(f64, SampleTape)> {
    let mut estimates = vec![noisy.clone()];
    let mut caches = Vec::with_capacity(unroll);
    for t in 1..=unroll {
        let prev2 = if t >= 2 {
            Some(&estimates[t - 2])
        } else {
            None
        };
        let corr = frozen.map(|f| f[t - 1].as_slice());
        let (next, _, cache) =
            did_forward_cached(&estimates[t - 1], prev2, w, dilation_for(t), corr)?;
        estimates.push(next);
        caches.push(cache);
    }
    let loss = l1_loss(&estimates[unroll], clean)?;
    Ok((
        loss,
        SampleTape {
            clean: clean.clone(),
            estimates,
            caches,
        },
    ))
}

fn check_batch(batch: &[(Image, Image)], cfg: &TapeConfig) -> Result<()> {
    if batch.is_empty() {
        return Err(IdfError::InvalidArgument("empty training batch".into()));
    }
    if cfg.unroll == 0 {
        return Err(IdfError::InvalidArgument("unroll must be ≥ 1".into()));
    }
    Ok(())
}

pub(crate) fn forward_with_frozen(
    batch: &[(Image, Image)],
    weights: &ModelWeights,
    cfg: &TapeConfig,
    frozen: Option<&[Vec<Vec<f64>>]>,
) -> Result<(f64, Tape)> {
    check_batch(batch, cfg)?;
    let mut samples = Vec::with_capacity(batch.len());
    let mut total = 0.0;
    for (i, (noisy, clean)) in batch.iter().enumerate() {
        let (loss, tape) = forward_sample(
            noisy,
            clean,
            weights,
            cfg.unroll,
            frozen.map(|f| f[i].as_slice()),
        )?;
        total += loss;
        samples.push(tape);
    }
    let loss = total / batch.len() as f64;
    Ok((
        loss,
        Tape {
            weights: weights.clone(),
            cfg: *cfg,
            batch: batch.to_vec(),
            samples,
            loss,
            spent: false,
        },
    ))
}

/// Runs the fixed-length unrolled loop on every `(noisy, clean)` pair and
/// records what the backward pass needs. The loss is the batch mean of the
/// per-sample L1 distance between the last estimate and the clean image.
pub fn forward_with_tape(
    batch: &[(Image, Image)],
    weights: &ModelWeights,
    cfg: &TapeConfig,
) -> Result<(f64, Tape)> {
    forward_with_frozen(batch, weights, cfg, None)
}

impl Tape {
    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn is_spent(&self) -> bool {
        self.spent
    }

    /// Final estimate of each sample.
    pub fn outputs(&self) -> Vec<&Image> {
        self.samples
            .iter()
            .map(|s| s.estimates.last().expect("at least one estimate"))
            .collect()
    }

    /// Re-runs the recorded forward pass and returns its loss.
    pub fn replay(&self) -> Result<f64> {
        let (loss, _) = forward_with_tape(&self.batch, &self.weights, &self.cfg)?;
        Ok(loss)
    }

    /// Correlation planes per sample and iteration, for frozen-path evaluation.
    pub(crate) fn corr_fields(&self) -> Vec<Vec<Vec<f64>>> {
        self.samples
            .iter()
            .map(|s| s.caches.iter().map(|c| c.corr.clone()).collect())
            .collect()
    }

    /// Hash of every ReLU, clamp and |·| branch taken in the forward pass.
    pub(crate) fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for s in &self.samples {
            for c in &s.caches {
                for v in c.fem.z1.iter().chain(&c.fem.z2).chain(&c.gsm.hidden) {
                    (*v > 0.0).hash(&mut h);
                }
                for v in &c.pre_clamp {
                    ((*v < 0.0) as u8 + 2 * (*v > 1.0) as u8).hash(&mut h);
                }
            }
            let last = s.estimates.last().expect("at least one estimate");
            for (a, b) in last.data().iter().zip(s.clean.data()) {
                (a > b).hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Gradients of the recorded loss with respect to every weight tensor.
pub fn backward(tape: &mut Tape) -> Result<Gradients> {
    backward_scaled(tape, 1.0)
}

/// Gradients of `scale · loss`.
pub fn backward_scaled(tape: &mut Tape, scale: f64) -> Result<Gradients> {
    if tape.spent {
        return Err(IdfError::TapeInvalidated);
    }
    tape.spent = true;
    let mut grads = Gradients::zeros_like(&tape.weights);
    let batch = tape.samples.len() as f64;
    for sample in &tape.samples {
        backward_sample(&tape.weights, &tape.cfg, sample, scale / batch, &mut grads);
    }
    Ok(grads)
}

fn relu_mask(grad: &mut [f64], pre: &[f64]) {
    for (g, &z) in grad.iter_mut().zip(pre) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}

fn backward_sample(
    w: &ModelWeights,
    cfg: &TapeConfig,
    s: &SampleTape,
    scale: f64,
    grads: &mut Gradients,
) {
    let mc = &w.config();
    let t_max = s.caches.len();
    let (c, h, wd) = s.clean.dims();
    let m = h * wd;
    let area = mc.kernel_area();
    let hidden = mc.hidden_width;

    let mut d_est: Vec<Vec<f64>> = vec![vec![0.0; c * m]; t_max + 1];
    let n = (c * m) as f64;
    for ((d, a), b) in d_est[t_max]
        .iter_mut()
        .zip(s.estimates[t_max].data())
        .zip(s.clean.data())
    {
        *d = if a > b {
            scale / n
        } else if a < b {
            -scale / n
        } else {
            0.0
        };
    }

    for t in (1..=t_max).rev() {
        let cache = &s.caches[t - 1];
        let e_prev = &s.estimates[t - 1];
        // the first iteration's input is the noisy image; nothing upstream to reach
        let propagate = t >= 2;

        let mut dy = std::mem::take(&mut d_est[t]);
        if cfg.clamp_adjoint == ClampAdjoint::Hard {
            for (g, &y) in dy.iter_mut().zip(&cache.pre_clamp) {
                if !(0.0..=1.0).contains(&y) {
                    *g = 0.0;
                }
            }
        }

        let (d_patches, d_kernels) =
            apply_kernels_backward(&cache.patches, &cache.kpm.power.kernels, c, area, m, &dy);
        let mut d_e = if propagate {
            col2im(&d_patches, c, h, wd, mc.kernel_size, cache.dilation)
        } else {
            Vec::new()
        };

        // kernel prediction
        let d_raw =
            power_normalize_backward(&cache.kpm.raw, &cache.kpm.power, area, mc.power, &d_kernels);
        let kg = w.kpm.backward_raw(&cache.kpm.normed, h, wd, &d_raw, true);
        grads.add(KPM, &kg.weight);
        grads.add(KPM + 1, &kg.bias);
        let d_normed = kg.input.expect("input gradient requested");
        let d_concat = rms_normalize_backward(
            &cache.kpm.concat,
            cache.kpm.concat_rms,
            RMS_EPSILON,
            &d_normed,
        );

        let gate = &cache.gsm.gate;
        let features = &cache.fem.features;
        let mut d_features = vec![0.0; hidden * m];
        let mut d_gate = vec![0.0; hidden];
        for ch in 0..hidden {
            let dg = &d_concat[ch * m..(ch + 1) * m];
            let f = &features[ch * m..(ch + 1) * m];
            let df = &mut d_features[ch * m..(ch + 1) * m];
            let mut acc = 0.0;
            for j in 0..m {
                df[j] = dg[j] * gate[ch];
                acc += dg[j] * f[j];
            }
            d_gate[ch] = acc;
        }

        // global statistics
        let d_logit: Vec<f64> = d_gate
            .iter()
            .zip(gate)
            .map(|(d, g)| d * g * (1.0 - g))
            .collect();
        let hidden_act: Vec<f64> = cache.gsm.hidden.iter().map(|v| v.max(0.0)).collect();
        let g2 = w.gsm2.backward_raw(&hidden_act, 1, 1, &d_logit, true);
        grads.add(GSM2, &g2.weight);
        grads.add(GSM2 + 1, &g2.bias);
        let mut d_hidden = g2.input.expect("input gradient requested");
        relu_mask(&mut d_hidden, &cache.gsm.hidden);
        let g1 = w
            .gsm1
            .backward_raw(&cache.gsm.normed, 1, 1, &d_hidden, propagate);
        grads.add(GSM1, &g1.weight);
        grads.add(GSM1 + 1, &g1.bias);
        if propagate {
            let d_stats = rms_normalize_backward(
                &cache.gsm.stats,
                cache.gsm.stats_rms,
                RMS_EPSILON,
                &g1.input.expect("input gradient requested"),
            );
            let e_prev2 = &s.estimates[t - 2];
            let mut d_res = vec![0.0; c * m];
            for ch in 0..c {
                let mu = cache.gsm.stats[ch];
                let sigma = cache.gsm.stats[c + ch];
                let d_mu = d_stats[ch] / m as f64;
                let d_sigma = d_stats[c + ch];
                let a = &e_prev.data()[ch * m..(ch + 1) * m];
                let b = &e_prev2.data()[ch * m..(ch + 1) * m];
                for j in 0..m {
                    let mut g = d_mu;
                    if sigma > 0.0 {
                        g += d_sigma * (a[j] - b[j] - mu) / (m as f64 * sigma);
                    }
                    d_res[ch * m + j] = g;
                }
            }
            for (de, dr) in d_e.iter_mut().zip(&d_res) {
                *de += dr;
            }
            for (dp, dr) in d_est[t - 2].iter_mut().zip(&d_res) {
                *dp -= dr;
            }
        }

        // feature extraction
        relu_mask(&mut d_features, &cache.fem.z2);
        let a1: Vec<f64> = cache.fem.z1.iter().map(|v| v.max(0.0)).collect();
        let f2 = w.fem2.backward_raw(&a1, h, wd, &d_features, true);
        grads.add(FEM2, &f2.weight);
        grads.add(FEM2 + 1, &f2.bias);
        let mut d_z1 = f2.input.expect("input gradient requested");
        relu_mask(&mut d_z1, &cache.fem.z1);
        let f1 = w.fem1.backward_raw(&cache.fem.x0, h, wd, &d_z1, propagate);
        grads.add(FEM1, &f1.weight);
        grads.add(FEM1 + 1, &f1.bias);
        if propagate {
            let d_x0 = rms_normalize_backward(
                e_prev.data(),
                cache.fem.x0_rms,
                RMS_EPSILON,
                &f1.input.expect("input gradient requested"),
            );
            for (de, dx) in d_e.iter_mut().zip(&d_x0) {
                *de += dx;
            }
            for (acc, de) in d_est[t - 1].iter_mut().zip(&d_e) {
                *acc += de;
            }
        }
    }
}
