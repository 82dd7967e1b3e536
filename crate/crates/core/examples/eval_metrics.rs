//! PSNR and SSIM on a few controlled distortions.

use idf::metrics::evaluate;
use idf::synth::synthetic_textures;
use idf::{Image, Noise, Rng};

fn main() -> idf::Result<()> {
    let clean = synthetic_textures(1, 64, 2).remove(0);
    let shifted = Image::from_fn(3, 64, 64, |c, y, x| (clean.get(c, y, x) + 0.1).min(1.0));
    let blurred = Image::from_fn(3, 64, 64, |c, y, x| {
        let xs = [x.saturating_sub(1), x, (x + 1).min(63)];
        xs.iter().map(|&xx| clean.get(c, y, xx)).sum::<f64>() / 3.0
    });
    let noisy = Noise::Gaussian { sigma255: 15.0 }.apply(&clean, &mut Rng::new(4))?;

    let report = evaluate([
        ("identical".to_string(), &clean, &clean),
        ("brightened".to_string(), &shifted, &clean),
        ("box-blurred".to_string(), &blurred, &clean),
        ("gaussian:15".to_string(), &noisy, &clean),
    ])?;
    print!("{}", idf::io::metric_markdown(&report));
    Ok(())
}
