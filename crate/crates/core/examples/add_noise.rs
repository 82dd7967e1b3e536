//! Corrupts a synthetic texture with every noise model and reports the damage.
//!
//! cargo run --example add_noise [OUT_DIR]

use std::path::PathBuf;

use idf::io::save_image;
use idf::noise::MIXTURE_LEVELS;
use idf::synth::synthetic_textures;
use idf::{psnr, ssim, Noise, Rng};

fn main() -> idf::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("idf-add-noise"));
    let clean = synthetic_textures(1, 96, 7).remove(0);
    save_image(&clean, &out.join("clean.png"))?;

    let mut suite = vec![
        Noise::Gaussian { sigma255: 25.0 },
        Noise::SpatialGaussian { sigma255: 55.0 },
        Noise::Poisson { alpha: 3.5 },
        Noise::SaltPepper { density: 0.02 },
        Noise::Speckle { variance: 0.04 },
    ];
    suite.extend((1..=MIXTURE_LEVELS.len() as u8).map(|level| Noise::Mixture { level }));

    println!("{:<22} {:>8} {:>7}", "noise", "PSNR", "SSIM");
    for (i, noise) in suite.iter().enumerate() {
        let noisy = noise.apply(&clean, &mut Rng::stream(1, i as u64))?;
        let name = noise.to_string().replace([':', '.'], "_");
        save_image(&noisy, &out.join(format!("{name}.png")))?;
        println!(
            "{:<22} {:>8.2} {:>7.4}",
            noise.to_string(),
            psnr(&noisy, &clean)?,
            ssim(&noisy, &clean)?
        );
    }
    println!("images in {}", out.display());
    Ok(())
}
