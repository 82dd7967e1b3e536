//! The dynamic denoising block and its four sub-networks.
//!
//! One [`ModelWeights`] instance is shared by every iteration. A forward pass
//! predicts a kernel per pixel from three cues:
//!
//! * feature extraction: two 3×3 conv + ReLU layers on the RMS-normalised estimate,
//! * global statistics: per-channel mean/std of the last residual, squashed
//!   through two 1×1 convs into a sigmoid gate over the feature channels,
//! * local correlation: windowed Pearson correlation between each tap and the
//!   centre pixel (not learned),
//!
//! then a 3×3 conv over the RMS-normalised concatenation of the gated features
//! and the correlation planes yields raw kernels, which are power-normalised
//! and applied to the (dilated) neighbourhoods of the estimate.

use crate::error::{IdfError, Result};
use crate::noise::Rng;
use crate::ops::{
    apply_kernels_raw, check_kernel_size, im2col, power_normalize_raw, ConvLayer, KernelField,
    PowerNormOutput, POWER_ETA,
};
use crate::tensor::{channel_stats_raw, rms_normalize_raw, Image, Tensor, RMS_EPSILON};

/// Variance below which a correlation window counts as flat.
pub const LCM_VARIANCE_FLOOR: f64 = 1e-8;

/// Canonical tensor order, shared by the weight file and [`crate::train::Gradients`].
pub const TENSOR_NAMES: [&str; 10] = [
    "fem.conv1.w",
    "fem.conv1.b",
    "fem.conv2.w",
    "fem.conv2.b",
    "gsm.conv1.w",
    "gsm.conv1.b",
    "gsm.conv2.w",
    "gsm.conv2.b",
    "kpm.conv.w",
    "kpm.conv.b",
];

/// Architecture hyper-parameters. Only `channels`, `hidden_width` and
/// `kernel_size` affect tensor shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub channels: usize,
    pub hidden_width: usize,
    pub kernel_size: usize,
    pub power: f64,
    pub lcm_window: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 3,
            hidden_width: 56,
            kernel_size: 3,
            power: 3.0,
            lcm_window: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        check_kernel_size(self.kernel_size)?;
        if self.channels == 0 || self.hidden_width == 0 {
            return Err(IdfError::InvalidArgument(
                "channels and hidden_width must be positive".into(),
            ));
        }
        if self.power.is_nan() || self.power < 1.0 {
            return Err(IdfError::InvalidArgument(format!(
                "power must be ≥ 1, got {}",
                self.power
            )));
        }
        if self.lcm_window == 0 || self.lcm_window.is_multiple_of(2) {
            return Err(IdfError::InvalidArgument(format!(
                "correlation window must be odd, got {}",
                self.lcm_window
            )));
        }
        Ok(())
    }

    pub fn kernel_area(&self) -> usize {
        self.kernel_size * self.kernel_size
    }

    /// Expected shape of every tensor, in [`TENSOR_NAMES`] order.
    pub fn tensor_shapes(&self) -> [Vec<usize>; 10] {
        let (c, h, k2) = (self.channels, self.hidden_width, self.kernel_area());
        [
            vec![h, c, 3, 3],
            vec![h],
            vec![h, h, 3, 3],
            vec![h],
            vec![h, 2 * c, 1, 1],
            vec![h],
            vec![h, h, 1, 1],
            vec![h],
            vec![k2, h + k2, 3, 3],
            vec![k2],
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensor_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

/// The single parameter set shared across all iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    pub fem1: ConvLayer,
    pub fem2: ConvLayer,
    pub gsm1: ConvLayer,
    pub gsm2: ConvLayer,
    pub kpm: ConvLayer,
}

impl ModelWeights {
    /// Kaiming-uniform (fan-in) weights and zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let shapes = config.tensor_shapes();
        let mut tensors: Vec<Tensor> = Vec::with_capacity(10);
        for shape in shapes.iter() {
            if shape.len() == 4 {
                let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                let bound = (6.0 / fan_in).sqrt();
                let n = shape.iter().product();
                let data = (0..n)
                    .map(|_| (2.0 * rng.uniform() - 1.0) * bound)
                    .collect();
                tensors.push(Tensor::from_parts(shape.clone(), data));
            } else {
                tensors.push(Tensor::zeros(shape.clone()));
            }
        }
        ModelWeights::from_tensors(config, tensors)
    }

    /// Builds weights from tensors in [`TENSOR_NAMES`] order, checking shapes.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        if tensors.len() != TENSOR_NAMES.len() {
            return Err(IdfError::Shape(format!(
                "expected {} tensors, got {}",
                TENSOR_NAMES.len(),
                tensors.len()
            )));
        }
        for ((name, expected), t) in TENSOR_NAMES
            .iter()
            .zip(config.tensor_shapes())
            .zip(&tensors)
        {
            if t.dims() != expected.as_slice() {
                return Err(IdfError::WeightShape {
                    name: name.to_string(),
                    expected,
                    found: t.dims().to_vec(),
                });
            }
        }
        let mut it = tensors.into_iter();
        let mut layer = || -> Result<ConvLayer> {
            let w = it.next().expect("length checked");
            let b = it.next().expect("length checked");
            ConvLayer::new(w, b)
        };
        Ok(ModelWeights {
            config,
            fem1: layer()?,
            fem2: layer()?,
            gsm1: layer()?,
            gsm2: layer()?,
            kpm: layer()?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Changes non-shape hyper-parameters (power, correlation window).
    pub fn with_config(mut self, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        if config.tensor_shapes() != self.config.tensor_shapes() {
            return Err(IdfError::Shape("new config changes tensor shapes".into()));
        }
        self.config = config;
        Ok(self)
    }

    pub fn tensors(&self) -> [&Tensor; 10] {
        [
            &self.fem1.weight,
            &self.fem1.bias,
            &self.fem2.weight,
            &self.fem2.bias,
            &self.gsm1.weight,
            &self.gsm1.bias,
            &self.gsm2.weight,
            &self.gsm2.bias,
            &self.kpm.weight,
            &self.kpm.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.fem1.weight,
            &mut self.fem1.bias,
            &mut self.fem2.weight,
            &mut self.fem2.bias,
            &mut self.gsm1.weight,
            &mut self.gsm1.bias,
            &mut self.gsm2.weight,
            &mut self.gsm2.bias,
            &mut self.kpm.weight,
            &mut self.kpm.bias,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Replaces every bias with uniform values in `[-scale, scale]`.
    pub fn randomize_biases(&mut self, scale: f64, seed: u64) {
        let mut rng = Rng::new(seed);
        for (i, t) in self.tensors_mut().into_iter().enumerate() {
            if i % 2 == 1 {
                for v in t.data_mut() {
                    *v = (2.0 * rng.uniform() - 1.0) * scale;
                }
            }
        }
    }
}

/// FEM output, C_h×H×W.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(pub Tensor);

/// GSM output: one sigmoid gate per feature channel.
#[derive(Debug, Clone, PartialEq)]
pub struct GateVector(pub Tensor);

/// LCM output: K²×H×W Pearson coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrField(pub Tensor);

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_image(img: &Image, w: &ModelWeights) -> Result<()> {
    if img.channels() != w.config.channels {
        return Err(IdfError::Shape(format!(
            "image has {} channels, model expects {}",
            img.channels(),
            w.config.channels
        )));
    }
    Ok(())
}

pub(crate) struct FemCache {
    pub x0: Vec<f64>,
    pub x0_rms: f64,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub features: Vec<f64>,
}

pub(crate) fn fem_raw(est: &Image, w: &ModelWeights) -> FemCache {
    let (_, h, wd) = est.dims();
    let (x0, x0_rms) = rms_normalize_raw(est.data(), RMS_EPSILON);
    let z1 = w.fem1.forward_raw(&x0, h, wd);
    let z2 = w.fem2.forward_raw(&relu(&z1), h, wd);
    let features = relu(&z2);
    FemCache {
        x0,
        x0_rms,
        z1,
        z2,
        features,
    }
}

pub fn fem_forward(est: &Image, w: &ModelWeights) -> Result<FeatureMap> {
    check_image(est, w)?;
    let (_, h, wd) = est.dims();
    let cache = fem_raw(est, w);
    Ok(FeatureMap(Tensor::from_parts(
        vec![w.config.hidden_width, h, wd],
        cache.features,
    )))
}

pub(crate) struct GsmCache {
    pub stats: Vec<f64>,
    pub stats_rms: f64,
    pub normed: Vec<f64>,
    pub hidden: Vec<f64>,
    pub gate: Vec<f64>,
}

pub(crate) fn gsm_raw(
    residual: &[f64],
    channels: usize,
    positions: usize,
    w: &ModelWeights,
) -> GsmCache {
    let stats = channel_stats_raw(residual, channels, positions).concat();
    let (normed, stats_rms) = rms_normalize_raw(&stats, RMS_EPSILON);
    let hidden = w.gsm1.forward_raw(&normed, 1, 1);
    let logits = w.gsm2.forward_raw(&relu(&hidden), 1, 1);
    let gate = logits.into_iter().map(sigmoid).collect();
    GsmCache {
        stats,
        stats_rms,
        normed,
        hidden,
        gate,
    }
}

/// Gate from the residual between the last two estimates; pass zeros on the first iteration.
pub fn gsm_forward(residual: &Image, w: &ModelWeights) -> Result<GateVector> {
    check_image(residual, w)?;
    let cache = gsm_raw(
        residual.data(),
        residual.channels(),
        residual.positions(),
        w,
    );
    Ok(GateVector(Tensor::from_parts(
        vec![w.config.hidden_width],
        cache.gate,
    )))
}

/// `window`×`window` block sums of `plane` (row length `stride`), for an
/// `out_h`×`out_w` grid whose first block starts at `(start, start)`.
fn box_sums(
    plane: &[f64],
    stride: usize,
    start: usize,
    out_h: usize,
    out_w: usize,
    window: usize,
    rows: &mut Vec<f64>,
) -> Vec<f64> {
    let rows_h = out_h + window - 1;
    rows.clear();
    rows.resize(rows_h * out_w, 0.0);
    for y in 0..rows_h {
        let src = &plane[(start + y) * stride + start..][..out_w + window - 1];
        let dst = &mut rows[y * out_w..(y + 1) * out_w];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = src[x..x + window].iter().sum();
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for y in 0..out_h {
        let dst = &mut out[y * out_w..(y + 1) * out_w];
        for a in 0..window {
            for (d, v) in dst
                .iter_mut()
                .zip(&rows[(y + a) * out_w..(y + a + 1) * out_w])
            {
                *d += v;
            }
        }
    }
    out
}

/// Windowed Pearson correlation between the centre samples
/// `s_c(q) = x[clamp(q)]` and each tap's samples `s_o(q) = x[clamp(q + o)]`,
/// averaged over channels; one plane per tap, the centre plane is 1.
///
/// With edge clamping `s_o` is the clamped plane shifted by `o`, so the tap
/// moments are read from centre moments computed on a grid enlarged by the
/// largest offset, and the cross moment of `−o` is that of `o` shifted.
pub(crate) fn lcm_raw(
    data: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    kernel_size: usize,
    dilation: usize,
    window: usize,
) -> Vec<f64> {
    let m = height * width;
    let area = kernel_size * kernel_size;
    let center = (area - 1) / 2;
    let kr = (kernel_size / 2) as isize;
    let wr = window / 2;
    let reach = kernel_size / 2 * dilation;
    let margin = wr + 2 * reach;
    let (he, we) = (height + 2 * margin, width + 2 * margin);
    let (gh, gw) = (height + 2 * reach, width + 2 * reach);
    let start = margin - reach - wr;
    let n = (window * window) as f64;
    let offset = |tap: usize| {
        (
            ((tap / kernel_size) as isize - kr) * dilation as isize,
            ((tap % kernel_size) as isize - kr) * dilation as isize,
        )
    };
    // Index into the enlarged moment grid for output pixel (y, x) moved by o.
    let at = |y: usize, x: usize, o: (isize, isize)| {
        (y as isize + reach as isize + o.0) as usize * gw
            + (x as isize + reach as isize + o.1) as usize
    };

    let mut out = vec![0.0; area * m];
    out[center * m..(center + 1) * m].fill(1.0);
    let mut rows = Vec::new();
    let mut ext = vec![0.0; he * we];
    let mut prod = vec![0.0; he * we];
    for c in 0..channels {
        let plane = &data[c * m..(c + 1) * m];
        for ey in 0..he {
            let sy = (ey as isize - margin as isize).clamp(0, height as isize - 1) as usize;
            let row = &plane[sy * width..(sy + 1) * width];
            for ex in 0..we {
                let sx = (ex as isize - margin as isize).clamp(0, width as isize - 1) as usize;
                ext[ey * we + ex] = row[sx];
            }
        }
        let s1 = box_sums(&ext, we, start, gh, gw, window, &mut rows);
        for (p, v) in prod.iter_mut().zip(&ext) {
            *p = v * v;
        }
        let s2 = box_sums(&prod, we, start, gh, gw, window, &mut rows);
        for tap in center + 1..area {
            let o = offset(tap);
            for ey in 0..he {
                let oy = (ey as isize + o.0).clamp(0, he as isize - 1) as usize;
                for ex in 0..we {
                    let ox = (ex as isize + o.1).clamp(0, we as isize - 1) as usize;
                    prod[ey * we + ex] = ext[ey * we + ex] * ext[oy * we + ox];
                }
            }
            let cross = box_sums(&prod, we, start, gh, gw, window, &mut rows);
            let mirror = area - 1 - tap;
            let neg = (-o.0, -o.1);
            for (t, tap_o, cross_shift) in [(tap, o, (0, 0)), (mirror, neg, neg)] {
                let dst = &mut out[t * m..(t + 1) * m];
                for y in 0..height {
                    for x in 0..width {
                        let pc = at(y, x, (0, 0));
                        let po = at(y, x, tap_o);
                        let mc = s1[pc] / n;
                        let mo = s1[po] / n;
                        let vc = s2[pc] / n - mc * mc;
                        let vo = s2[po] / n - mo * mo;
                        let r = if vc < LCM_VARIANCE_FLOOR || vo < LCM_VARIANCE_FLOOR {
                            0.0
                        } else {
                            let cov = cross[at(y, x, cross_shift)] / n - mc * mo;
                            (cov / (vc * vo).sqrt()).clamp(-1.0, 1.0)
                        };
                        dst[y * width + x] += r / channels as f64;
                    }
                }
            }
        }
    }
    out
}

/// Channel-averaged windowed Pearson correlation between each tap and the centre.
pub fn lcm_forward(
    est: &Image,
    kernel_size: usize,
    dilation: usize,
    window: usize,
) -> Result<CorrField> {
    check_kernel_size(kernel_size)?;
    if dilation != 1 && dilation != 2 {
        return Err(IdfError::InvalidArgument(format!(
            "dilation must be 1 or 2, got {dilation}"
        )));
    }
    if window == 0 || window.is_multiple_of(2) {
        return Err(IdfError::InvalidArgument(format!(
            "correlation window must be odd, got {window}"
        )));
    }
    let (c, h, w) = est.dims();
    let data = lcm_raw(est.data(), c, h, w, kernel_size, dilation, window);
    Ok(CorrField(Tensor::from_parts(
        vec![kernel_size * kernel_size, h, w],
        data,
    )))
}

pub(crate) struct KpmCache {
    pub concat: Vec<f64>,
    pub concat_rms: f64,
    pub normed: Vec<f64>,
    pub raw: Vec<f64>,
    pub power: PowerNormOutput,
}

pub(crate) fn kpm_raw(
    features: &[f64],
    gate: &[f64],
    corr: &[f64],
    height: usize,
    width: usize,
    w: &ModelWeights,
) -> KpmCache {
    let m = height * width;
    let mut concat = Vec::with_capacity(features.len() + corr.len());
    for (plane, &g) in features.chunks_exact(m).zip(gate) {
        concat.extend(plane.iter().map(|v| v * g));
    }
    concat.extend_from_slice(corr);
    let (normed, concat_rms) = rms_normalize_raw(&concat, RMS_EPSILON);
    let raw = w.kpm.forward_raw(&normed, height, width);
    let power = power_normalize_raw(&raw, w.config.kernel_area(), w.config.power, POWER_ETA);
    KpmCache {
        concat,
        concat_rms,
        normed,
        raw,
        power,
    }
}

pub fn kpm_forward(
    f_fe: &FeatureMap,
    f_gs: &GateVector,
    f_lc: &CorrField,
    w: &ModelWeights,
) -> Result<KernelField> {
    let cfg = &w.config;
    let (ch, h, wd) = f_fe.0.chw()?;
    let (k2, h2, w2) = f_lc.0.chw()?;
    if ch != cfg.hidden_width || f_gs.0.len() != cfg.hidden_width {
        return Err(IdfError::Shape(format!(
            "features/gate have {ch}/{} channels, model expects {}",
            f_gs.0.len(),
            cfg.hidden_width
        )));
    }
    if k2 != cfg.kernel_area() || (h2, w2) != (h, wd) {
        return Err(IdfError::Shape(format!(
            "correlation field {k2}×{h2}×{w2} does not fit {}×{h}×{wd}",
            cfg.kernel_area()
        )));
    }
    let cache = kpm_raw(f_fe.0.data(), f_gs.0.data(), f_lc.0.data(), h, wd, w);
    let mut field = KernelField::raw(cfg.kernel_size, h, wd, cache.raw)?;
    field = crate::ops::power_normalize(&field, cfg.power, POWER_ETA)?;
    Ok(field)
}

/// Everything one block evaluation produced, kept for the backward pass.
pub(crate) struct DidCache {
    pub dilation: usize,
    pub fem: FemCache,
    pub gsm: GsmCache,
    pub corr: Vec<f64>,
    pub kpm: KpmCache,
    pub patches: Vec<f64>,
    pub pre_clamp: Vec<f64>,
}

pub(crate) fn did_forward_cached(
    est_prev: &Image,
    est_prev2: Option<&Image>,
    w: &ModelWeights,
    dilation: usize,
    frozen_corr: Option<&[f64]>,
) -> Result<(Image, KernelField, DidCache)> {
    check_image(est_prev, w)?;
    if dilation != 1 && dilation != 2 {
        return Err(IdfError::InvalidArgument(format!(
            "dilation must be 1 or 2, got {dilation}"
        )));
    }
    let cfg = &w.config;
    let (c, h, wd) = est_prev.dims();
    let m = h * wd;
    let residual = match est_prev2 {
        Some(prev2) => est_prev.sub(prev2)?.into_data(),
        None => vec![0.0; c * m],
    };
    let fem = fem_raw(est_prev, w);
    let gsm = gsm_raw(&residual, c, m, w);
    let corr = match frozen_corr {
        Some(f) => f.to_vec(),
        None => lcm_raw(
            est_prev.data(),
            c,
            h,
            wd,
            cfg.kernel_size,
            dilation,
            cfg.lcm_window,
        ),
    };
    let kpm = kpm_raw(&fem.features, &gsm.gate, &corr, h, wd, w);
    let patches = im2col(est_prev.data(), c, h, wd, cfg.kernel_size, dilation);
    let pre_clamp = apply_kernels_raw(&patches, &kpm.power.kernels, c, cfg.kernel_area(), m);
    let next = Image::from_parts(
        c,
        h,
        wd,
        pre_clamp.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    );
    let mut kernels = KernelField::raw(cfg.kernel_size, h, wd, kpm.power.kernels.clone())?;
    kernels.mark_normalized(kpm.power.degenerate);
    let cache = DidCache {
        dilation,
        fem,
        gsm,
        corr,
        kpm,
        patches,
        pre_clamp,
    };
    Ok((next, kernels, cache))
}

/// One block application: predict per-pixel kernels from `est_prev` (and the
/// residual against `est_prev2`, zero when absent) and filter `est_prev` with them.
pub fn did_forward(
    est_prev: &Image,
    est_prev2: Option<&Image>,
    w: &ModelWeights,
    dilation: usize,
) -> Result<(Image, KernelField)> {
    let (next, kernels, _) = did_forward_cached(est_prev, est_prev2, w, dilation, None)?;
    Ok((next, kernels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_param_count() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.param_count(), 38_706);
        let w = ModelWeights::init(cfg, 0).unwrap();
        assert_eq!(w.param_count(), 38_706);
    }

    #[test]
    fn init_is_seeded_and_biases_are_zero() {
        let cfg = ModelConfig::default();
        let a = ModelWeights::init(cfg, 4).unwrap();
        assert_eq!(a, ModelWeights::init(cfg, 4).unwrap());
        assert_ne!(a, ModelWeights::init(cfg, 5).unwrap());
        for (i, t) in a.tensors().iter().enumerate() {
            if i % 2 == 1 {
                assert!(t.data().iter().all(|&v| v == 0.0));
            }
        }
        let bound = (6.0f64 / 27.0).sqrt();
        assert!(a.fem1.weight.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn from_tensors_names_the_bad_tensor() {
        let small = ModelConfig {
            hidden_width: 8,
            ..ModelConfig::default()
        };
        let w = ModelWeights::init(small, 1).unwrap();
        let tensors = w.tensors().iter().map(|t| (*t).clone()).collect();
        let err = ModelWeights::from_tensors(ModelConfig::default(), tensors).unwrap_err();
        assert!(err.to_string().contains("fem.conv1.w"), "{err}");
    }

    #[test]
    fn gate_is_strictly_inside_unit_interval() {
        let mut w = ModelWeights::init(ModelConfig::default(), 2).unwrap();
        w.randomize_biases(0.5, 3);
        let r = Image::from_fn(3, 6, 6, |c, y, x| {
            ((c * 7 + y * 3 + x) % 5) as f64 * 0.1 - 0.2
        });
        let g = gsm_forward(&r, &w).unwrap();
        assert!(g.0.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let zero = Image::filled(3, 6, 6, 0.0);
        let g0 = gsm_forward(&zero, &w).unwrap();
        assert_eq!(g0, gsm_forward(&Image::filled(3, 9, 2, 0.0), &w).unwrap());
    }

    #[test]
    fn lcm_constant_image() {
        let img = Image::filled(3, 7, 9, 0.4);
        for d in [1, 2] {
            let f = lcm_forward(&img, 3, d, 7).unwrap();
            let m = 63;
            for tap in 0..9 {
                let expect = if tap == 4 { 1.0 } else { 0.0 };
                assert!(f.0.data()[tap * m..(tap + 1) * m]
                    .iter()
                    .all(|&v| v == expect));
            }
        }
    }

    #[test]
    fn lcm_perfect_horizontal_correlation() {
        // every row constant, rows differ: the (0,+1) tap copies the centre
        let img = Image::from_fn(1, 9, 9, |_, y, _| (y as f64 * 0.37).sin() * 0.5 + 0.5);
        let f = lcm_forward(&img, 3, 1, 7).unwrap();
        let m = 81;
        let right = 5; // (u=0, v=+1)
        for j in 0..m {
            assert!((f.0.data()[right * m + j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_image_is_scaled_by_kernel_mass() {
        // sum of each kernel is S/(S+η), so a constant c maps to c·S/(S+η)
        let w = ModelWeights::init(ModelConfig::default(), 11).unwrap();
        let img = Image::filled(3, 6, 6, 0.5);
        for d in [1, 2] {
            let (next, kernels) = did_forward(&img, None, &w, d).unwrap();
            for j in 0..36 {
                let s = kernels.column_sum(j);
                assert!(s <= 1.0 && s > 0.999);
                for c in 0..3 {
                    assert!((next.data()[c * 36 + j] - 0.5 * s).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn did_rejects_channel_mismatch() {
        let w = ModelWeights::init(ModelConfig::default(), 1).unwrap();
        let img = Image::filled(1, 4, 4, 0.5);
        assert!(did_forward(&img, None, &w, 1).is_err());
        assert!(did_forward(&Image::filled(3, 4, 4, 0.5), None, &w, 3).is_err());
    }
}
