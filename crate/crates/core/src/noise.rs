//! Seeded synthetic corruption: Gaussian, spatially correlated Gaussian,
//! Poisson, salt-and-pepper, speckle and the four-level mixture.
//!
//! Gaussian levels are given in 0–255 units, everything else in [0, 1] units.
//! Every synthesizer clamps its output to [0, 1].

use std::fmt;
use std::str::FromStr;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{IdfError, Result};
use crate::tensor::Image;

/// Counter-based generator. Streams forked from the same seed are independent
/// and reproducible, so corpora can be produced in any order.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng::stream(seed, 0)
    }

    pub fn stream(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Rng { seed, inner }
    }

    /// Fresh generator on stream `stream_id` of this generator's seed.
    pub fn fork(&self, stream_id: u64) -> Rng {
        Rng::stream(self.seed, stream_id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random::<bool>()
    }

    pub fn poisson(&mut self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        // lambda is finite and positive, so construction cannot fail
        Poisson::new(lambda)
            .map(|d| d.sample(&mut self.inner))
            .unwrap_or(0.0)
    }
}

/// Mixture parameters for one level:
/// (Gaussian variance, speckle variance, Poisson α, salt-and-pepper density, second speckle variance).
pub const MIXTURE_LEVELS: [(f64, f64, f64, f64, f64); 4] = [
    (0.003, 0.003, 1.0, 0.002, 0.003),
    (0.004, 0.004, 1.0, 0.002, 0.003),
    (0.006, 0.006, 1.0, 0.003, 0.006),
    (0.008, 0.008, 1.0, 0.004, 0.008),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    Gaussian { sigma255: f64 },
    SpatialGaussian { sigma255: f64 },
    Poisson { alpha: f64 },
    SaltPepper { density: f64 },
    Speckle { variance: f64 },
    Mixture { level: u8 },
}

impl Noise {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Noise::Gaussian { sigma255 } | Noise::SpatialGaussian { sigma255 } => {
                sigma255.is_finite() && sigma255 >= 0.0
            }
            Noise::Poisson { alpha } => alpha.is_finite() && alpha >= 0.0,
            Noise::SaltPepper { density } => (0.0..=1.0).contains(&density),
            Noise::Speckle { variance } => variance.is_finite() && variance >= 0.0,
            Noise::Mixture { level } => (1..=4).contains(&level),
        };
        if ok {
            Ok(())
        } else {
            Err(IdfError::InvalidArgument(format!(
                "invalid noise parameters: {self}"
            )))
        }
    }

    pub fn apply(&self, img: &Image, rng: &mut Rng) -> Result<Image> {
        self.validate()?;
        Ok(match *self {
            Noise::Gaussian { sigma255 } => add_gaussian(img, sigma255, rng),
            Noise::SpatialGaussian { sigma255 } => add_spatial_gaussian(img, sigma255, rng),
            Noise::Poisson { alpha } => add_poisson(img, alpha, rng),
            Noise::SaltPepper { density } => add_salt_pepper(img, density, rng),
            Noise::Speckle { variance } => add_speckle(img, variance, rng),
            Noise::Mixture { level } => add_mixture(img, level, rng)?,
        })
    }

    /// Short label used in report rows.
    pub fn label(&self) -> String {
        match *self {
            Noise::Gaussian { sigma255 } => format!("Gaussian σ={sigma255}"),
            Noise::SpatialGaussian { sigma255 } => format!("Spatial Gaussian σ={sigma255}"),
            Noise::Poisson { alpha } => format!("Poisson α={alpha}"),
            Noise::SaltPepper { density } => format!("Salt & Pepper d={density}"),
            Noise::Speckle { variance } => format!("Speckle σ²={variance}"),
            Noise::Mixture { level } => format!("Mixture Level {level}"),
        }
    }
}

impl fmt::Display for Noise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Noise::Gaussian { sigma255 } => write!(f, "gaussian:{sigma255:?}"),
            Noise::SpatialGaussian { sigma255 } => write!(f, "spatial_gaussian:{sigma255:?}"),
            Noise::Poisson { alpha } => write!(f, "poisson:{alpha:?}"),
            Noise::SaltPepper { density } => write!(f, "salt_pepper:{density:?}"),
            Noise::Speckle { variance } => write!(f, "speckle:{variance:?}"),
            Noise::Mixture { level } => write!(f, "mixture:{level}"),
        }
    }
}

impl FromStr for Noise {
    type Err = IdfError;

    /// Parses `kind:value`, e.g. `gaussian:25`, `salt_pepper:0.02`, `mixture:4`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || IdfError::Config(format!("cannot parse noise spec `{s}`"));
        let (kind, value) = s.trim().split_once(':').ok_or_else(bad)?;
        let num = || value.trim().parse::<f64>().map_err(|_| bad());
        let noise = match kind.trim().replace('-', "_").as_str() {
            "gaussian" => Noise::Gaussian { sigma255: num()? },
            "spatial_gaussian" => Noise::SpatialGaussian { sigma255: num()? },
            "poisson" => Noise::Poisson { alpha: num()? },
            "salt_pepper" => Noise::SaltPepper { density: num()? },
            "speckle" => Noise::Speckle { variance: num()? },
            "mixture" => Noise::Mixture {
                level: value.trim().parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        noise
            .validate()
            .map_err(|e| IdfError::Config(e.to_string()))?;
        Ok(noise)
    }
}

/// A noise model together with the seed that makes it reproducible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub noise: Noise,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(noise: Noise, seed: u64) -> Self {
        NoiseSpec { noise, seed }
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        self.noise.apply(img, &mut Rng::new(self.seed))
    }
}

fn map_pixels(img: &Image, mut f: impl FnMut(f64) -> f64) -> Image {
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = f(*v).clamp(0.0, 1.0);
    }
    out
}

pub fn add_gaussian(img: &Image, sigma255: f64, rng: &mut Rng) -> Image {
    if sigma255 == 0.0 {
        return img.clone();
    }
    let sigma = sigma255 / 255.0;
    map_pixels(img, |v| v + sigma * rng.normal())
}

/// White noise of std `sigma`, averaged over a 3×3 window (replicate padding).
pub(crate) fn box_filtered_noise(
    c: usize,
    h: usize,
    w: usize,
    sigma: f64,
    rng: &mut Rng,
) -> Vec<f64> {
    let white: Vec<f64> = (0..c * h * w).map(|_| sigma * rng.normal()).collect();
    let mut out = vec![0.0; white.len()];
    for ch in 0..c {
        let plane = &white[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -1isize..=1 {
                    let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    for dx in -1isize..=1 {
                        let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        acc += plane[sy * w + sx];
                    }
                }
                out[(ch * h + y) * w + x] = acc / 9.0;
            }
        }
    }
    out
}

pub fn add_spatial_gaussian(img: &Image, sigma255: f64, rng: &mut Rng) -> Image {
    if sigma255 == 0.0 {
        return img.clone();
    }
    let (c, h, w) = img.dims();
    let noise = box_filtered_noise(c, h, w, sigma255 / 255.0, rng);
    let mut i = 0;
    map_pixels(img, |v| {
        let out = v + noise[i];
        i += 1;
        out
    })
}

/// Shot noise at 8-bit photon scale: `n = Poisson(255·I)/255 − I`, output `I + α·n`.
pub fn add_poisson(img: &Image, alpha: f64, rng: &mut Rng) -> Image {
    if alpha == 0.0 {
        return img.clone();
    }
    map_pixels(img, |v| {
        let n = rng.poisson(v * 255.0) / 255.0 - v;
        v + alpha * n
    })
}

/// Each pixel (all channels together) is replaced by 0 or 1 with probability `density`.
pub fn add_salt_pepper(img: &Image, density: f64, rng: &mut Rng) -> Image {
    if density == 0.0 {
        return img.clone();
    }
    let mut out = img.clone();
    let (c, h, w) = img.dims();
    let m = h * w;
    for j in 0..m {
        if rng.uniform() >= density {
            continue;
        }
        let value = if rng.coin() { 1.0 } else { 0.0 };
        for ch in 0..c {
            out.data_mut()[ch * m + j] = value;
        }
    }
    out
}

/// Multiplicative `I + n·I` with `n` uniform, zero mean, variance `variance`.
pub fn add_speckle(img: &Image, variance: f64, rng: &mut Rng) -> Image {
    if variance == 0.0 {
        return img.clone();
    }
    let half_width = (3.0 * variance).sqrt();
    map_pixels(img, |v| {
        let n = (2.0 * rng.uniform() - 1.0) * half_width;
        v + n * v
    })
}

/// Gaussian, speckle, Poisson, salt-and-pepper, speckle, in that order.
pub fn add_mixture(img: &Image, level: u8, rng: &mut Rng) -> Result<Image> {
    let idx = usize::from(level)
        .checked_sub(1)
        .filter(|&i| i < MIXTURE_LEVELS.len())
        .ok_or_else(|| {
            IdfError::InvalidArgument(format!("mixture level must be 1–4, got {level}"))
        })?;
    let (var_g, var_s1, alpha, density, var_s2) = MIXTURE_LEVELS[idx];
    let out = add_gaussian(img, var_g.sqrt() * 255.0, rng);
    let out = add_speckle(&out, var_s1, rng);
    let out = add_poisson(&out, alpha, rng);
    let out = add_salt_pepper(&out, density, rng);
    Ok(add_speckle(&out, var_s2, rng))
}
