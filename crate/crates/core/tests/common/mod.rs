//! Straight-line reference implementations used as oracles. Nothing here
//! calls into the library's numeric code; only its containers and weights.

#![allow(dead_code)]

use idf::{Image, ModelConfig, ModelWeights, Rng};

pub const EPS_RMS: f64 = 1e-4;
pub const ETA: f64 = 1e-4;
pub const TAU: f64 = 1e-8;

pub fn clampi(v: isize, n: usize) -> usize {
    v.clamp(0, n as isize - 1) as usize
}

pub fn random_image(c: usize, h: usize, w: usize, rng: &mut Rng) -> Image {
    Image::from_fn(c, h, w, |_, _, _| rng.uniform())
}

/// Weights with random biases so every path is exercised.
pub fn random_weights(cfg: ModelConfig, seed: u64) -> ModelWeights {
    let mut w = ModelWeights::init(cfg, seed).unwrap();
    w.randomize_biases(0.1, seed ^ 0x5eed);
    w
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        hidden_width: 6,
        ..ModelConfig::default()
    }
}

/// Cross-correlation with edge clamping, weight laid out `[o][i][ky][kx]`.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    x: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    c_out: usize,
    k: usize,
    bias: &[f64],
) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; c_out * h * w];
    for o in 0..c_out {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = bias[o];
                for i in 0..c_in {
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = clampi(y as isize + ky as isize - r, h);
                            let sx = clampi(xx as isize + kx as isize - r, w);
                            acc += weight[((o * c_in + i) * k + ky) * k + kx]
                                * x[(i * h + sy) * w + sx];
                        }
                    }
                }
                out[(o * h + y) * w + xx] = acc;
            }
        }
    }
    out
}

pub fn naive_rms(v: &[f64]) -> Vec<f64> {
    let ms = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    let d = ms.sqrt() + EPS_RMS;
    v.iter().map(|x| x / d).collect()
}

/// Two-pass mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pearson correlation, or `None` when either variance is below τ.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let va = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
    let vb = b.iter().map(|x| (x - mb) * (x - mb)).sum::<f64>() / n;
    if va < TAU || vb < TAU {
        return None;
    }
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n;
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Brute-force windowed correlation field, `K²` planes of `H·W`.
pub fn naive_lcm(img: &Image, k: usize, d: usize, l: usize) -> Vec<f64> {
    let (c, h, w) = img.dims();
    let (kr, lr) = ((k / 2) as isize, (l / 2) as isize);
    let center = (k * k - 1) / 2;
    let mut out = vec![0.0; k * k * h * w];
    for y in 0..h {
        for x in 0..w {
            for tap in 0..k * k {
                let j = y * w + x;
                if tap == center {
                    out[tap * h * w + j] = 1.0;
                    continue;
                }
                let oy = ((tap / k) as isize - kr) * d as isize;
                let ox = ((tap % k) as isize - kr) * d as isize;
                let mut acc = 0.0;
                for ch in 0..c {
                    let mut sc = Vec::new();
                    let mut so = Vec::new();
                    for a in -lr..=lr {
                        for b in -lr..=lr {
                            let qy = y as isize + a;
                            let qx = x as isize + b;
                            sc.push(img.get(ch, clampi(qy, h), clampi(qx, w)));
                            so.push(img.get(ch, clampi(qy + oy, h), clampi(qx + ox, w)));
                        }
                    }
                    acc += pearson(&sc, &so).unwrap_or(0.0);
                }
                out[tap * h * w + j] = acc / c as f64;
            }
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Output of the monolithic block reference.
pub struct RefBlock {
    pub next: Vec<f64>,
    pub kernels: Vec<f64>,
    pub raw: Vec<f64>,
    pub gate: Vec<f64>,
    pub features: Vec<f64>,
    pub corr: Vec<f64>,
}

/// One block application written out end to end without any library math.
pub fn reference_did(est: &Image, prev2: Option<&Image>, wts: &ModelWeights, d: usize) -> RefBlock {
    let cfg = *wts.config();
    let (c, h, w) = est.dims();
    let m = h * w;
    let (ch, k, p) = (cfg.hidden_width, cfg.kernel_size, cfg.power);
    let k2 = k * k;
    let t = wts.tensors();

    let x0 = naive_rms(est.data());
    let z1: Vec<f64> = naive_conv(&x0, c, h, w, t[0].data(), ch, 3, t[1].data())
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let features: Vec<f64> = naive_conv(&z1, ch, h, w, t[2].data(), ch, 3, t[3].data())
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();

    let residual: Vec<f64> = match prev2 {
        Some(p2) => est
            .data()
            .iter()
            .zip(p2.data())
            .map(|(a, b)| a - b)
            .collect(),
        None => vec![0.0; c * m],
    };
    let mut stats = vec![0.0; 2 * c];
    for i in 0..c {
        let (mu, sd) = mean_std(&residual[i * m..(i + 1) * m]);
        stats[i] = mu;
        stats[c + i] = sd;
    }
    let sn = naive_rms(&stats);
    let hidden: Vec<f64> = (0..ch)
        .map(|o| {
            let v: f64 = (0..2 * c)
                .map(|i| t[4].data()[o * 2 * c + i] * sn[i])
                .sum::<f64>()
                + t[5].data()[o];
            v.max(0.0)
        })
        .collect();
    let gate: Vec<f64> = (0..ch)
        .map(|o| {
            let v: f64 = (0..ch)
                .map(|i| t[6].data()[o * ch + i] * hidden[i])
                .sum::<f64>()
                + t[7].data()[o];
            sigmoid(v)
        })
        .collect();

    let corr = naive_lcm(est, k, d, cfg.lcm_window);
    let mut concat = Vec::with_capacity((ch + k2) * m);
    for o in 0..ch {
        concat.extend(features[o * m..(o + 1) * m].iter().map(|v| v * gate[o]));
    }
    concat.extend_from_slice(&corr);
    let cn = naive_rms(&concat);
    let raw = naive_conv(&cn, ch + k2, h, w, t[8].data(), k2, 3, t[9].data());

    let mut kernels = vec![0.0; k2 * m];
    for j in 0..m {
        let s: f64 = (0..k2).map(|i| raw[i * m + j].abs().powf(p)).sum();
        for i in 0..k2 {
            kernels[i * m + j] = raw[i * m + j].abs().powf(p) / (s + ETA);
        }
    }
    let kr = (k / 2) as isize;
    let mut next = vec![0.0; c * m];
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for i in 0..k2 {
                    let u = (i / k) as isize - kr;
                    let v = (i % k) as isize - kr;
                    let sy = clampi(y as isize + u * d as isize, h);
                    let sx = clampi(x as isize + v * d as isize, w);
                    acc += kernels[i * m + y * w + x] * est.get(ci, sy, sx);
                }
                next[ci * m + y * w + x] = acc.clamp(0.0, 1.0);
            }
        }
    }
    RefBlock {
        next,
        kernels,
        raw,
        gate,
        features,
        corr,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Mean squared error and PSNR written out directly.
pub fn naive_psnr(a: &Image, b: &Image) -> f64 {
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / n;
    if mse < 1e-10 {
        100.0
    } else {
        -10.0 * mse.log10()
    }
}

/// SSIM by explicit 11×11 Gaussian windows at every valid position.
pub fn naive_ssim(a: &Image, b: &Image) -> f64 {
    let (c, h, w) = a.dims();
    let n = 11;
    let sigma: f64 = 1.5;
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            g[i * n + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let gs: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= gs);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for ch in 0..c {
        let mut sum = 0.0;
        let mut count = 0;
        for y in 0..=h - n {
            for x in 0..=w - n {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let wt = g[i * n + j];
                        let p = a.get(ch, y + i, x + j);
                        let q = b.get(ch, y + i, x + j);
                        mx += wt * p;
                        my += wt * q;
                        sxx += wt * p * p;
                        syy += wt * q * q;
                        sxy += wt * p * q;
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    total / c as f64
}

/// Scalar AdamW update, one parameter at a time.
pub struct ScalarAdamW {
    pub m: f64,
    pub v: f64,
    pub t: i32,
}

impl ScalarAdamW {
    pub fn step(&mut self, theta: f64, g: f64, lr: f64, wd: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        self.t += 1;
        let theta = theta - lr * wd * theta;
        self.m = b1 * self.m + (1.0 - b1) * g;
        self.v = b2 * self.v + (1.0 - b2) * g * g;
        let mh = self.m / (1.0 - b1.powi(self.t));
        let vh = self.v / (1.0 - b2.powi(self.t));
        theta - lr * mh / (vh.sqrt() + eps)
    }
}

/// K×K mean with edge clamping, one sliding window at a time.
pub fn naive_box(img: &Image, k: usize) -> Vec<f64> {
    let (c, h, w) = img.dims();
    let r = (k / 2) as isize;
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        acc += img.get(ch, clampi(y as isize + dy, h), clampi(x as isize + dx, w));
                    }
                }
                out.push(acc / (k * k) as f64);
            }
        }
    }
    out
}

/// Minimum and maximum of the dilated K×K neighbourhood around `(y, x)`.
pub fn patch_range(img: &Image, ch: usize, y: usize, x: usize, k: usize, d: usize) -> (f64, f64) {
    let (_, h, w) = img.dims();
    let r = (k / 2) as isize;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for u in -r..=r {
        for v in -r..=r {
            let s = img.get(
                ch,
                clampi(y as isize + u * d as isize, h),
                clampi(x as isize + v * d as isize, w),
            );
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    (lo, hi)
}

/// Parameter count of the block summed layer by layer.
pub fn expected_param_count(c: usize, ch: usize, k: usize) -> usize {
    let k2 = k * k;
    (ch * c * 9 + ch)
        + (ch * ch * 9 + ch)
        + (ch * 2 * c + ch)
        + (ch * ch + ch)
        + (k2 * (ch + k2) * 9 + k2)
}
