//! Procedural clean RGB textures for desk-scale training and tests.

use std::f64::consts::PI;

use crate::noise::Rng;
use crate::tensor::Image;

/// One texture: two oriented gratings, a smooth colour gradient and a few
/// flat discs and rectangles with hard edges.
pub fn synthetic_texture(size: usize, rng: &mut Rng) -> Image {
    let s = size as f64;
    let mut grating = || {
        let angle = rng.uniform() * PI;
        let period = 4.0 + rng.uniform() * 20.0;
        let phase = rng.uniform() * 2.0 * PI;
        let amp = 0.08 + rng.uniform() * 0.12;
        let tint = [rng.uniform(), rng.uniform(), rng.uniform()];
        (
            angle.cos(),
            angle.sin(),
            2.0 * PI / period,
            phase,
            amp,
            tint,
        )
    };
    let g1 = grating();
    let g2 = grating();
    let base = [rng.uniform(), rng.uniform(), rng.uniform()];
    let slope = [
        (rng.uniform() - 0.5, rng.uniform() - 0.5),
        (rng.uniform() - 0.5, rng.uniform() - 0.5),
        (rng.uniform() - 0.5, rng.uniform() - 0.5),
    ];
    let mut img = Image::from_fn(3, size, size, |c, y, x| {
        let (yf, xf) = (y as f64 / s, x as f64 / s);
        let mut v = 0.2 + 0.6 * base[c] + 0.3 * (slope[c].0 * yf + slope[c].1 * xf);
        for g in [&g1, &g2] {
            let t = (g.0 * x as f64 + g.1 * y as f64) * g.2 + g.3;
            v += g.4 * (0.5 + 0.5 * g.5[c]) * t.sin();
        }
        v
    });
    let shapes = 2 + rng.below(4);
    for _ in 0..shapes {
        let colour = [rng.uniform(), rng.uniform(), rng.uniform()];
        let cy = rng.uniform() * s;
        let cx = rng.uniform() * s;
        let r = s * (0.06 + rng.uniform() * 0.18);
        let disc = rng.coin();
        for y in 0..size {
            for x in 0..size {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                let inside = if disc {
                    dy * dy + dx * dx <= r * r
                } else {
                    dy.abs() <= r && dx.abs() <= 0.6 * r
                };
                if inside {
                    for (c, &col) in colour.iter().enumerate() {
                        img.set(c, y, x, col);
                    }
                }
            }
        }
    }
    img.clamp01()
}

/// `count` textures of `size`×`size`, each from its own stream of `seed`.
pub fn synthetic_textures(count: usize, size: usize, seed: u64) -> Vec<Image> {
    (0..count)
        .map(|i| synthetic_texture(size, &mut Rng::stream(seed, 1000 + i as u64)))
        .collect()
}
