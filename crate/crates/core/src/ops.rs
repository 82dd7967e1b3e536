//! Patch extraction, per-pixel kernel application, power normalisation and
//! same-size convolution, each with the adjoint the trainer needs.
//!
//! Every spatial gather uses replicate (edge-clamp) padding. Taps inside a
//! K×K neighbourhood are ordered row-major with the vertical offset outer, so
//! the centre tap sits at index `(K² - 1) / 2`.

use crate::error::{IdfError, Result};
use crate::tensor::{Image, Tensor};

/// Stabiliser in the power-normalisation denominator.
pub const POWER_ETA: f64 = 1e-4;

/// Overlapping K×K neighbourhoods of an image, laid out C×K²×(H·W).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchField {
    channels: usize,
    kernel_size: usize,
    dilation: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl PatchField {
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }
    pub fn kernel_area(&self) -> usize {
        self.kernel_size * self.kernel_size
    }
    pub fn dilation(&self) -> usize {
        self.dilation
    }
    pub fn positions(&self) -> usize {
        self.height * self.width
    }
    pub fn source_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Value of tap `tap` at position `pos` in channel `c`.
    pub fn get(&self, c: usize, tap: usize, pos: usize) -> f64 {
        self.data[(c * self.kernel_area() + tap) * self.positions() + pos]
    }
}

/// Per-pixel kernels, laid out 1×K²×(H·W).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField {
    kernel_size: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    normalized: bool,
    degenerate: usize,
}

impl KernelField {
    /// Wraps raw (unnormalised) kernel weights.
    pub fn raw(kernel_size: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_kernel_size(kernel_size)?;
        let need = kernel_size * kernel_size * height * width;
        if data.len() != need {
            return Err(IdfError::Shape(format!(
                "kernel field K={kernel_size} over {height}×{width} needs {need} values, got {}",
                data.len()
            )));
        }
        Ok(KernelField {
            kernel_size,
            height,
            width,
            data,
            normalized: false,
            degenerate: 0,
        })
    }

    pub(crate) fn mark_normalized(&mut self, degenerate: usize) {
        self.normalized = true;
        self.degenerate = degenerate;
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }
    pub fn kernel_area(&self) -> usize {
        self.kernel_size * self.kernel_size
    }
    pub fn positions(&self) -> usize {
        self.height * self.width
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
    /// Number of positions whose raw column was entirely zero.
    pub fn degenerate_count(&self) -> usize {
        self.degenerate
    }

    pub fn center_index(&self) -> usize {
        (self.kernel_area() - 1) / 2
    }

    pub fn get(&self, tap: usize, pos: usize) -> f64 {
        self.data[tap * self.positions() + pos]
    }

    /// Plane of centre-tap weights, one per position.
    pub fn center_plane(&self) -> &[f64] {
        let m = self.positions();
        let c = self.center_index();
        &self.data[c * m..(c + 1) * m]
    }

    /// Sum over taps at one position.
    pub fn column_sum(&self, pos: usize) -> f64 {
        (0..self.kernel_area()).map(|i| self.get(i, pos)).sum()
    }
}

pub(crate) fn check_kernel_size(k: usize) -> Result<()> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(IdfError::InvalidArgument(format!(
            "kernel size must be odd and positive, got {k}"
        )));
    }
    Ok(())
}

fn check_dilation(d: usize) -> Result<()> {
    if d != 1 && d != 2 {
        return Err(IdfError::InvalidArgument(format!(
            "dilation must be 1 or 2, got {d}"
        )));
    }
    Ok(())
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Clamped source index for every (offset, output coordinate) pair.
fn offset_table(n: usize, k: usize, dilation: usize) -> Vec<usize> {
    let r = (k / 2) as isize;
    let mut table = Vec::with_capacity(k * n);
    for u in -r..=r {
        for i in 0..n {
            table.push(clamp_index(i as isize + u * dilation as isize, n));
        }
    }
    table
}

/// Gathers every (dilated) K×K neighbourhood into rows of `C·K²` by `H·W`.
pub(crate) fn im2col(
    input: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    k: usize,
    dilation: usize,
) -> Vec<f64> {
    let m = height * width;
    let area = k * k;
    let rows = offset_table(height, k, dilation);
    let r = (k / 2) as isize;
    let mut out = Vec::with_capacity(channels * area * m);
    for c in 0..channels {
        let plane = &input[c * m..(c + 1) * m];
        for u in 0..k {
            let row_idx = &rows[u * height..(u + 1) * height];
            for v in 0..k {
                // Columns [lo, hi) need no clamping and are copied as one run.
                let shift = (v as isize - r) * dilation as isize;
                let lo = (-shift).clamp(0, width as isize) as usize;
                let hi = (width as isize - shift).clamp(lo as isize, width as isize) as usize;
                for &sy in row_idx {
                    let src = &plane[sy * width..(sy + 1) * width];
                    out.extend(std::iter::repeat_n(src[0], lo));
                    out.extend_from_slice(
                        &src[(lo as isize + shift) as usize..(hi as isize + shift) as usize],
                    );
                    out.extend(std::iter::repeat_n(src[width - 1], width - hi));
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatter-adds patch gradients back to source pixels.
pub(crate) fn col2im(
    cols: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    k: usize,
    dilation: usize,
) -> Vec<f64> {
    let m = height * width;
    let area = k * k;
    let rows = offset_table(height, k, dilation);
    let colt = offset_table(width, k, dilation);
    let mut out = vec![0.0; channels * m];
    for c in 0..channels {
        let plane = &mut out[c * m..(c + 1) * m];
        for u in 0..k {
            let row_idx = &rows[u * height..(u + 1) * height];
            for v in 0..k {
                let col_idx = &colt[v * width..(v + 1) * width];
                let src = &cols[(c * area + u * k + v) * m..][..m];
                for (y, &sy) in row_idx.iter().enumerate() {
                    let src_row = &src[y * width..(y + 1) * width];
                    let dst = &mut plane[sy * width..(sy + 1) * width];
                    for (&g, &sx) in src_row.iter().zip(col_idx) {
                        dst[sx] += g;
                    }
                }
            }
        }
    }
    out
}

/// Extracts every K×K neighbourhood at the given dilation.
pub fn unfold(img: &Image, kernel_size: usize, dilation: usize) -> Result<PatchField> {
    check_kernel_size(kernel_size)?;
    check_dilation(dilation)?;
    let (c, h, w) = img.dims();
    Ok(PatchField {
        channels: c,
        kernel_size,
        dilation,
        height: h,
        width: w,
        data: im2col(img.data(), c, h, w, kernel_size, dilation),
    })
}

fn powp(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 3.0 {
        a * a * a
    } else if p.fract() == 0.0 && (1.0..=16.0).contains(&p) {
        a.powi(p as i32)
    } else {
        a.powf(p)
    }
}

/// Normalised kernels plus the per-position denominators `S + η`.
pub(crate) struct PowerNormOutput {
    pub kernels: Vec<f64>,
    pub denom: Vec<f64>,
    pub degenerate: usize,
}

pub(crate) fn power_normalize_raw(raw: &[f64], area: usize, p: f64, eta: f64) -> PowerNormOutput {
    let m = raw.len() / area;
    let mut kernels: Vec<f64> = raw.iter().map(|&v| powp(v, p)).collect();
    let mut denom = vec![0.0; m];
    for i in 0..area {
        for (d, &a) in denom.iter_mut().zip(&kernels[i * m..(i + 1) * m]) {
            *d += a;
        }
    }
    let degenerate = denom.iter().filter(|&&s| s == 0.0).count();
    for d in denom.iter_mut() {
        *d += eta;
    }
    for i in 0..area {
        for (k, d) in kernels[i * m..(i + 1) * m].iter_mut().zip(&denom) {
            *k /= d;
        }
    }
    PowerNormOutput {
        kernels,
        denom,
        degenerate,
    }
}

/// Adjoint of [`power_normalize_raw`]. The derivative of |x| at 0 is taken as 0.
pub(crate) fn power_normalize_backward(
    raw: &[f64],
    out: &PowerNormOutput,
    area: usize,
    p: f64,
    grad_out: &[f64],
) -> Vec<f64> {
    let m = raw.len() / area;
    // dot_j = Σ_l g_lj k_lj
    let mut dot = vec![0.0; m];
    for i in 0..area {
        let g = &grad_out[i * m..(i + 1) * m];
        let k = &out.kernels[i * m..(i + 1) * m];
        for ((d, gj), kj) in dot.iter_mut().zip(g).zip(k) {
            *d += gj * kj;
        }
    }
    let mut grad = vec![0.0; raw.len()];
    for i in 0..area {
        for (j, (&d, &denom)) in dot.iter().zip(&out.denom).enumerate() {
            let idx = i * m + j;
            let x = raw[idx];
            if x == 0.0 {
                continue;
            }
            let da = (grad_out[idx] - d) / denom;
            let dpow = p * powp(x, p - 1.0) * x.signum();
            grad[idx] = da * dpow;
        }
    }
    grad
}

/// `|w|^p / (Σ_k |w_k|^p + η)` independently at every position.
pub fn power_normalize(raw: &KernelField, p: f64, eta: f64) -> Result<KernelField> {
    if raw.normalized {
        return Err(IdfError::InvalidArgument(
            "kernel field is already normalised".into(),
        ));
    }
    if p.is_nan() || p < 1.0 || eta.is_nan() || eta <= 0.0 {
        return Err(IdfError::InvalidArgument(format!(
            "power normalisation needs p ≥ 1 and η > 0, got p={p}, η={eta}"
        )));
    }
    let out = power_normalize_raw(&raw.data, raw.kernel_area(), p, eta);
    Ok(KernelField {
        kernel_size: raw.kernel_size,
        height: raw.height,
        width: raw.width,
        data: out.kernels,
        normalized: true,
        degenerate: out.degenerate,
    })
}

pub(crate) fn apply_kernels_raw(
    patches: &[f64],
    kernels: &[f64],
    channels: usize,
    area: usize,
    m: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; channels * m];
    for c in 0..channels {
        let dst = &mut out[c * m..(c + 1) * m];
        for i in 0..area {
            let y = &patches[(c * area + i) * m..][..m];
            let k = &kernels[i * m..(i + 1) * m];
            for j in 0..m {
                dst[j] += k[j] * y[j];
            }
        }
    }
    out
}

/// Adjoint of [`apply_kernels_raw`]; returns `(d patches, d kernels)`.
pub(crate) fn apply_kernels_backward(
    patches: &[f64],
    kernels: &[f64],
    channels: usize,
    area: usize,
    m: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut d_patches = vec![0.0; patches.len()];
    let mut d_kernels = vec![0.0; kernels.len()];
    for c in 0..channels {
        let g = &grad_out[c * m..(c + 1) * m];
        for i in 0..area {
            let off = (c * area + i) * m;
            let y = &patches[off..off + m];
            let k = &kernels[i * m..(i + 1) * m];
            let dk = &mut d_kernels[i * m..(i + 1) * m];
            let dy = &mut d_patches[off..off + m];
            for j in 0..m {
                dk[j] += g[j] * y[j];
                dy[j] = g[j] * k[j];
            }
        }
    }
    (d_patches, d_kernels)
}

/// Weighted sum of each neighbourhood with its own kernel, shared across channels.
pub fn apply_kernels(patches: &PatchField, kernels: &KernelField) -> Result<Image> {
    if patches.kernel_area() != kernels.kernel_area() {
        return Err(IdfError::Shape(format!(
            "patches have {} taps, kernels have {}",
            patches.kernel_area(),
            kernels.kernel_area()
        )));
    }
    if patches.source_dims() != kernels.dims() {
        return Err(IdfError::Shape(format!(
            "patches cover {:?}, kernels cover {:?}",
            patches.source_dims(),
            kernels.dims()
        )));
    }
    let out = apply_kernels_raw(
        &patches.data,
        &kernels.data,
        patches.channels,
        patches.kernel_area(),
        patches.positions(),
    );
    Ok(Image::from_parts(
        patches.channels,
        patches.height,
        patches.width,
        out,
    ))
}

/// `c = alpha · op(a) · op(b) + beta · c` for row-major operands.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_trans {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the slices are sized for the strides above (checked in debug).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Same-size K×K cross-correlation with edge clamping, accumulated into
/// `out`. The input is padded once; each tap is then a GEMM reading the
/// padded planes at a fixed offset, computed on a grid `W + K − 1` wide
/// whose extra columns are dropped.
#[allow(clippy::too_many_arguments)]
fn conv_shifted(
    weight: &[f64],
    c_out: usize,
    c_in: usize,
    k: usize,
    input: &[f64],
    height: usize,
    width: usize,
    out: &mut [f64],
) {
    let r = k / 2;
    let (hp, wp) = (height + 2 * r, width + 2 * r);
    let plane = hp * wp;
    let mut padded = Vec::with_capacity(c_in * plane);
    for src in input.chunks_exact(height * width) {
        for y in 0..hp {
            let sy = y.saturating_sub(r).min(height - 1);
            let row = &src[sy * width..(sy + 1) * width];
            padded.extend(std::iter::repeat_n(row[0], r));
            padded.extend_from_slice(row);
            padded.extend(std::iter::repeat_n(row[width - 1], r));
        }
    }
    let n = (height - 1) * wp + width;
    let mut acc = vec![0.0; c_out * n];
    let area = k * k;
    // the 8-row register tile wastes most of a pass when C_out is small and
    // not a multiple of 8; the 4-column side pads less
    let transpose =
        !c_out.is_multiple_of(8) && c_out.div_ceil(4) * 4 * 8 < c_out.div_ceil(8) * 8 * 8;
    for tap in 0..area {
        let offset = (tap / k) * wp + tap % k;
        let beta = if tap == 0 { 0.0 } else { 1.0 };
        // SAFETY: weight is read at o·C_in·K² + i·K² + tap for o < C_out, i < C_in;
        // padded at i·plane + offset + j with offset + j < plane for j < n;
        // the output spans acc exactly.
        unsafe {
            if transpose {
                matrixmultiply::dgemm(
                    n,
                    c_in,
                    c_out,
                    1.0,
                    padded.as_ptr().add(offset),
                    1,
                    plane as isize,
                    weight.as_ptr().add(tap),
                    area as isize,
                    (c_in * area) as isize,
                    beta,
                    acc.as_mut_ptr(),
                    1,
                    n as isize,
                );
            } else {
                matrixmultiply::dgemm(
                    c_out,
                    c_in,
                    n,
                    1.0,
                    weight.as_ptr().add(tap),
                    (c_in * area) as isize,
                    area as isize,
                    padded.as_ptr().add(offset),
                    plane as isize,
                    1,
                    beta,
                    acc.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
    }
    let m = height * width;
    for (dst, src) in out.chunks_exact_mut(m).zip(acc.chunks_exact(n)) {
        for y in 0..height {
            for (d, s) in dst[y * width..(y + 1) * width]
                .iter_mut()
                .zip(&src[y * wp..y * wp + width])
            {
                *d += s;
            }
        }
    }
}

/// One same-size convolution layer: weight C_out×C_in×k×k, bias C_out.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

pub(crate) struct ConvGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Option<Vec<f64>>,
}

impl ConvLayer {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (c_out, _, k) = conv_weight_dims(&weight)?;
        if k != 1 && k != 3 {
            return Err(IdfError::InvalidArgument(format!(
                "convolution kernels must be 1×1 or 3×3, got {k}×{k}"
            )));
        }
        if bias.dims() != [c_out] {
            return Err(IdfError::Shape(format!(
                "bias dims {:?} do not match {c_out} output channels",
                bias.dims()
            )));
        }
        Ok(ConvLayer { weight, bias })
    }

    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        ConvLayer {
            weight: Tensor::zeros(vec![c_out, c_in, k, k]),
            bias: Tensor::zeros(vec![c_out]),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }
    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }
    pub fn kernel(&self) -> usize {
        self.weight.dims()[2]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub(crate) fn forward_raw(&self, input: &[f64], height: usize, width: usize) -> Vec<f64> {
        let (c_out, c_in, k) = (self.out_channels(), self.in_channels(), self.kernel());
        let m = height * width;
        let mut out = vec![0.0; c_out * m];
        for (o, &b) in self.bias.data().iter().enumerate() {
            out[o * m..(o + 1) * m].fill(b);
        }
        if k == 1 {
            gemm(
                c_out,
                c_in,
                m,
                self.weight.data(),
                false,
                input,
                false,
                &mut out,
                1.0,
            );
        } else if !(direct_pays(c_out, c_in)
            && crate::direct::conv_accumulate(
                self.weight.data(),
                c_out,
                c_in,
                k,
                input,
                height,
                width,
                &mut out,
            ))
        {
            conv_shifted(
                self.weight.data(),
                c_out,
                c_in,
                k,
                input,
                height,
                width,
                &mut out,
            );
        }
        out
    }

    /// Gradients w.r.t. weight, bias and (optionally) the input.
    pub(crate) fn backward_raw(
        &self,
        input: &[f64],
        height: usize,
        width: usize,
        grad_out: &[f64],
        need_input: bool,
    ) -> ConvGrads {
        let (c_out, c_in, k) = (self.out_channels(), self.in_channels(), self.kernel());
        let m = height * width;
        let rows = c_in * k * k;
        let bias: Vec<f64> = grad_out.chunks_exact(m).map(|g| g.iter().sum()).collect();
        let owned_cols;
        let cols: &[f64] = if k == 1 {
            input
        } else {
            owned_cols = im2col(input, c_in, height, width, k, 1);
            &owned_cols
        };
        let mut weight = vec![0.0; c_out * rows];
        gemm(
            c_out,
            m,
            rows,
            grad_out,
            false,
            cols,
            true,
            &mut weight,
            0.0,
        );
        let input_grad = need_input.then(|| {
            let mut dcols = vec![0.0; rows * m];
            gemm(
                rows,
                c_out,
                m,
                self.weight.data(),
                true,
                grad_out,
                false,
                &mut dcols,
                0.0,
            );
            if k == 1 {
                dcols
            } else {
                col2im(&dcols, c_in, height, width, k, 1)
            }
        });
        ConvGrads {
            weight,
            bias,
            input: input_grad,
        }
    }
}

/// GEMM packing is efficient for wide layers; thin ones (few outputs or few
/// inputs) run faster in the register-tiled kernel.
fn direct_pays(c_out: usize, c_in: usize) -> bool {
    c_out < 16 || c_in < 8
}

fn conv_weight_dims(weight: &Tensor) -> Result<(usize, usize, usize)> {
    match weight.dims() {
        &[o, i, kh, kw] if kh == kw => Ok((o, i, kh)),
        other => Err(IdfError::Shape(format!(
            "convolution weight must be C_out×C_in×k×k, got {other:?}"
        ))),
    }
}

/// Same-size cross-correlation with replicate padding.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.chw()?;
    let layer = ConvLayer::new(weight.clone(), bias.clone())?;
    if layer.in_channels() != c {
        return Err(IdfError::Shape(format!(
            "input has {c} channels, weight expects {}",
            layer.in_channels()
        )));
    }
    let out = layer.forward_raw(input.data(), h, w);
    Ok(Tensor::from_parts(vec![layer.out_channels(), h, w], out))
}
