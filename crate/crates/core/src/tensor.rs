//! Dense row-major containers and the reductions shared by every stage.

use crate::error::{IdfError, Result};

/// Stabiliser added to the RMS before dividing.
pub const RMS_EPSILON: f64 = 1e-4;

/// Dense f64 tensor, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(IdfError::Shape(format!(
                "dims {:?} hold {} elements but {} were supplied",
                dims,
                n,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(IdfError::InvalidArgument(format!(
                "tensor values must be finite, found {bad}"
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims,
            data: vec![0.0; n],
        }
    }

    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Interprets a rank-3 tensor as `(C, H, W)`.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.dims.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            other => Err(IdfError::Shape(format!(
                "expected a C×H×W tensor, got dims {other:?}"
            ))),
        }
    }
}

/// A C×H×W raster. Pipeline inputs and outputs live in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(IdfError::Shape(format!(
                "image extents must be nonzero, got {channels}×{height}×{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(IdfError::Shape(format!(
                "{channels}×{height}×{width} image needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(IdfError::InvalidArgument(format!(
                "image values must be finite, found {bad}"
            )));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Image {
            channels,
            height,
            width,
            data,
        }
    }

    pub(crate) fn from_parts(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Image {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Pixel count H·W.
    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let m = self.positions();
        &self.data[c * m..(c + 1) * m]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }

    pub fn clamp01(&self) -> Image {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }

    pub fn scaled(&self, factor: f64) -> Image {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Element-wise `self - other`.
    pub fn sub(&self, other: &Image) -> Result<Image> {
        if !self.same_dims(other) {
            return Err(IdfError::Shape(format!(
                "cannot subtract {:?} from {:?}",
                other.dims(),
                self.dims()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Image::from_parts(
            self.channels,
            self.height,
            self.width,
            data,
        ))
    }

    /// Broadcasts a single-channel image to `channels` copies.
    pub fn replicate_channels(&self, channels: usize) -> Result<Image> {
        if self.channels != 1 {
            return Err(IdfError::Shape(format!(
                "only single-channel images can be replicated, got {} channels",
                self.channels
            )));
        }
        let mut data = Vec::with_capacity(channels * self.data.len());
        for _ in 0..channels {
            data.extend_from_slice(&self.data);
        }
        Ok(Image::from_parts(channels, self.height, self.width, data))
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(
            vec![self.channels, self.height, self.width],
            self.data.clone(),
        )
    }

    pub fn from_tensor(t: &Tensor) -> Result<Image> {
        let (c, h, w) = t.chw()?;
        Image::new(c, h, w, t.data().to_vec())
    }
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// `[μ_0 .. μ_{C-1}, σ_0 .. σ_{C-1}]`, the layout fed to the statistics head.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.mean.clone();
        v.extend_from_slice(&self.std);
        v
    }
}

pub fn channel_stats(t: &Tensor) -> Result<ChannelStats> {
    let (c, h, w) = t.chw()?;
    if h * w == 0 {
        return Err(IdfError::Shape("channel_stats needs H·W ≥ 1".into()));
    }
    Ok(channel_stats_raw(t.data(), c, h * w))
}

pub(crate) fn channel_stats_raw(data: &[f64], channels: usize, positions: usize) -> ChannelStats {
    let mut mean = Vec::with_capacity(channels);
    let mut std = Vec::with_capacity(channels);
    let n = positions as f64;
    for plane in data.chunks_exact(positions).take(channels) {
        let mu = plane.iter().sum::<f64>() / n;
        let var = plane.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        mean.push(mu);
        std.push(var.sqrt());
    }
    ChannelStats { mean, std }
}

/// Root mean square over every element.
pub(crate) fn rms(data: &[f64]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    (data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64).sqrt()
}

/// Divides by `rms + epsilon`; returns the normalised values and the RMS.
pub(crate) fn rms_normalize_raw(data: &[f64], epsilon: f64) -> (Vec<f64>, f64) {
    let r = rms(data);
    let scale = 1.0 / (r + epsilon);
    (data.iter().map(|v| v * scale).collect(), r)
}

/// Adjoint of [`rms_normalize_raw`]: given `d out`, returns `d in`.
pub(crate) fn rms_normalize_backward(
    input: &[f64],
    rms: f64,
    epsilon: f64,
    grad_out: &[f64],
) -> Vec<f64> {
    let denom = rms + epsilon;
    let mut grad: Vec<f64> = grad_out.iter().map(|g| g / denom).collect();
    if rms > 0.0 {
        let dot: f64 = grad_out.iter().zip(input).map(|(g, x)| g * x).sum();
        let coef = dot / (denom * denom) / (input.len() as f64 * rms);
        for (g, x) in grad.iter_mut().zip(input) {
            *g -= coef * x;
        }
    }
    grad
}

/// Sample-wise RMS normalisation over all elements of `t`.
pub fn rms_normalize(t: &Tensor, epsilon: f64) -> Result<Tensor> {
    if t.is_empty() {
        return Err(IdfError::InvalidArgument(
            "rms_normalize needs a nonempty tensor".into(),
        ));
    }
    let (data, _) = rms_normalize_raw(t.data(), epsilon);
    Ok(Tensor::from_parts(t.dims().to_vec(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms_normalize_zero_stays_zero() {
        let t = Tensor::zeros(vec![2, 3, 3]);
        let out = rms_normalize(&t, RMS_EPSILON).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rms_normalize_constant_is_unit_magnitude() {
        for c in [0.7, -3.0, 250.0] {
            let t = Tensor::new(vec![4], vec![c; 4]).unwrap();
            let out = rms_normalize(&t, RMS_EPSILON).unwrap();
            for &v in out.data() {
                let rel = (v - c.signum()).abs();
                assert!(rel <= RMS_EPSILON / c.abs() + 1e-15, "{c}: {v}");
            }
        }
    }

    #[test]
    fn rms_normalize_three_four() {
        let t = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        let out = rms_normalize(&t, 1e-4).unwrap();
        // sqrt((9 + 16) / 2) by hand
        let r = 12.5f64.sqrt();
        assert!((out.data()[0] - 3.0 / (r + 1e-4)).abs() < 1e-15);
        assert!((out.data()[1] - 4.0 / (r + 1e-4)).abs() < 1e-15);
        assert!((out.data()[0] - 0.848504).abs() < 1e-6);
        assert!((out.data()[1] - 1.131339).abs() < 1e-6);
    }

    #[test]
    fn rms_backward_matches_finite_differences() {
        let x = vec![0.3, -1.2, 0.8, 2.0, -0.1];
        let g = vec![0.5, 0.1, -0.7, 0.2, 1.0];
        let (_, r) = rms_normalize_raw(&x, RMS_EPSILON);
        let analytic = rms_normalize_backward(&x, r, RMS_EPSILON, &g);
        let f = |x: &[f64]| -> f64 {
            let (y, _) = rms_normalize_raw(x, RMS_EPSILON);
            y.iter().zip(&g).map(|(a, b)| a * b).sum()
        };
        for i in 0..x.len() {
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!(
                (fd - analytic[i]).abs() < 1e-8,
                "{i}: {fd} vs {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn channel_stats_cases() {
        let z = Tensor::zeros(vec![3, 2, 2]);
        let s = channel_stats(&z).unwrap();
        assert_eq!(s.mean, vec![0.0; 3]);
        assert_eq!(s.std, vec![0.0; 3]);

        let t = Tensor::new(vec![1, 1, 2], vec![1.0, 3.0]).unwrap();
        let s = channel_stats(&t).unwrap();
        assert_eq!(s.mean, vec![2.0]);
        assert_eq!(s.std, vec![1.0]);
    }

    #[test]
    fn tensor_rejects_bad_shapes_and_nan() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
        assert!(Image::new(1, 2, 2, vec![0.0; 3]).is_err());
    }
}
