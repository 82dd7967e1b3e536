//! Verifies the analytic gradients against central differences.

use idf::synth::synthetic_textures;
use idf::train::{grad_check, GradCheckConfig};
use idf::{ModelConfig, ModelWeights, Noise, Rng};

fn main() -> idf::Result<()> {
    let model = ModelConfig {
        hidden_width: 4,
        ..ModelConfig::default()
    };
    let mut weights = ModelWeights::init(model, 3)?;
    // non-zero biases so every branch carries gradient
    weights.randomize_biases(0.1, 4);
    let clean = synthetic_textures(1, 8, 5).remove(0);
    let noisy = Noise::Gaussian { sigma255: 20.0 }.apply(&clean, &mut Rng::new(6))?;

    let report = grad_check(&weights, (&noisy, &clean), &GradCheckConfig::default())?;
    println!(
        "{:<14} {:>8} {:>8} {:>12}",
        "tensor", "checked", "skipped", "max rel err"
    );
    for t in &report.tensors {
        println!(
            "{:<14} {:>8} {:>8} {:>12.3e}",
            t.name, t.compared, t.excluded, t.max_rel_err
        );
    }
    println!(
        "overall max relative error {:.3e}, {:.1}% of parameters skipped at kinks",
        report.max_rel_err,
        100.0 * report.excluded_fraction()
    );
    Ok(())
}
